/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_disparityview_free: (a: number, b: number) => void;
export const __wbg_scene_free: (a: number, b: number) => void;
export const disparityview_bad_pixel_fraction: (a: number) => number;
export const disparityview_mean_abs_error: (a: number) => number;
export const disparityview_rgba: (a: number) => [number, number];
export const scene_disparity_view: (a: number, b: number, c: number, d: number) => [number, number, number];
export const scene_encoding_rgba: (a: number, b: number) => [number, number, number, number];
export const scene_height: (a: number) => number;
export const scene_left_rgba: (a: number) => [number, number, number, number];
export const scene_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const scene_right_rgba: (a: number) => [number, number, number, number];
export const scene_similarity_rgba: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const scene_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
