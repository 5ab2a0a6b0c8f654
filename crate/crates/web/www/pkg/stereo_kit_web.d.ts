/* tslint:disable */
/* eslint-disable */

export class DisparityView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    rgba(): Uint8Array;
    readonly bad_pixel_fraction: number;
    readonly mean_abs_error: number;
}

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    disparity_view(use_rpe: boolean, max_disparity: number, heads: number): DisparityView;
    /**
     * False-colour rectification encoding of the left or right view.
     */
    encoding_rgba(right: boolean): Uint8Array;
    left_rgba(): Uint8Array;
    constructor(texture: string, roll_degrees: number, disparity: number, seed: number);
    right_rgba(): Uint8Array;
    /**
     * Rescaled similarity map (`cosine`, `lnd` or `multihead`) at one roll offset.
     */
    similarity_rgba(kind: string, offset: number, heads: number): Uint8Array;
    readonly height: number;
    readonly width: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_disparityview_free: (a: number, b: number) => void;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly disparityview_bad_pixel_fraction: (a: number) => number;
    readonly disparityview_mean_abs_error: (a: number) => number;
    readonly disparityview_rgba: (a: number) => [number, number];
    readonly scene_disparity_view: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly scene_encoding_rgba: (a: number, b: number) => [number, number, number, number];
    readonly scene_height: (a: number) => number;
    readonly scene_left_rgba: (a: number) => [number, number, number, number];
    readonly scene_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly scene_right_rgba: (a: number) => [number, number, number, number];
    readonly scene_similarity_rgba: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly scene_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
