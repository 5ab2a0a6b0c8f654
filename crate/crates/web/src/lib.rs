//! WebAssembly bindings for the browser demo. Every view is returned as
//! row-major RGBA bytes ready for `ImageData`.

use stereo_kit::encoding::{rescale_encoding, rpe_map, EncodingParams};
use stereo_kit::synth::{demo_on_sample, generate_scene, Rig, SceneSpec, StereoSample, Texture};
use stereo_kit::viz::{encoding_false_colour, rescale_unit, similarity_maps, to_rgba};
use stereo_kit::{CostKind, CostVolumeConfig, Result};
use wasm_bindgen::prelude::*;

const VIEW_CHANNELS: usize = 8;

fn js(e: stereo_kit::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Scene knobs exposed to the page; everything else follows the default scene.
pub fn scene_spec(texture: &str, roll_degrees: f64, disparity: f64, seed: u64) -> Result<SceneSpec> {
    let texture: Texture = texture.parse()?;
    let base = SceneSpec::rectified();
    let focal = base.rig.k_left[0];
    let rig = Rig::rectified(focal, base.width, base.height, disparity * base.plane_depth / focal)
        .with_roll(roll_degrees);
    let spec = base.with_rig(rig).with_texture(texture).with_seed(seed);
    spec.validate()?;
    Ok(spec)
}

#[wasm_bindgen]
pub struct Scene {
    sample: StereoSample,
}

#[wasm_bindgen]
pub struct DisparityView {
    rgba: Vec<u8>,
    mean_abs_error: f64,
    bad_pixel_fraction: f64,
}

#[wasm_bindgen]
impl DisparityView {
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean_abs_error(&self) -> f64 {
        self.mean_abs_error
    }

    #[wasm_bindgen(getter)]
    pub fn bad_pixel_fraction(&self) -> f64 {
        self.bad_pixel_fraction
    }
}

impl Scene {
    pub fn build(texture: &str, roll_degrees: f64, disparity: f64, seed: u64) -> Result<Self> {
        let spec = scene_spec(texture, roll_degrees, disparity, seed)?;
        Ok(Self {
            sample: generate_scene(&spec)?,
        })
    }

    pub fn image(&self, right: bool) -> Result<Vec<u8>> {
        to_rgba(if right { &self.sample.right } else { &self.sample.left })
    }

    pub fn similarity(&self, kind: &str, offset: usize, heads: usize) -> Result<Vec<u8>> {
        let kind: CostKind = kind.parse()?;
        let maps = similarity_maps(&self.sample.left, &self.sample.right, offset, heads)?;
        to_rgba(&rescale_unit(maps.get(kind))?)
    }

    pub fn encoding(&self, right: bool) -> Result<Vec<u8>> {
        let d = self.sample.left.dims();
        let p = EncodingParams::new(VIEW_CHANNELS)?;
        let (el, er) = rpe_map(&self.sample.gt_homography, d.w, d.h, &p)?;
        let m = rescale_encoding(if right { &er } else { &el })?;
        to_rgba(&encoding_false_colour(&m)?)
    }

    pub fn disparity(&self, use_rpe: bool, max_disparity: usize, heads: usize) -> Result<DisparityView> {
        let cfg = CostVolumeConfig::new(max_disparity, heads)?;
        let o = demo_on_sample(&self.sample, &cfg, use_rpe)?;
        let top = (max_disparity.max(2) - 1) as f32;
        Ok(DisparityView {
            rgba: to_rgba(&o.disparity.map(|v| v / top)?)?,
            mean_abs_error: o.report.mean_abs_error,
            bad_pixel_fraction: o.report.bad_pixel_fraction,
        })
    }
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(texture: &str, roll_degrees: f64, disparity: f64, seed: u32) -> Result<Scene, JsError> {
        Self::build(texture, roll_degrees, disparity, seed as u64).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.sample.left.dims().w
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.sample.left.dims().h
    }

    pub fn left_rgba(&self) -> Result<Vec<u8>, JsError> {
        self.image(false).map_err(js)
    }

    pub fn right_rgba(&self) -> Result<Vec<u8>, JsError> {
        self.image(true).map_err(js)
    }

    /// Rescaled similarity map (`cosine`, `lnd` or `multihead`) at one roll offset.
    pub fn similarity_rgba(&self, kind: &str, offset: usize, heads: usize) -> Result<Vec<u8>, JsError> {
        self.similarity(kind, offset, heads).map_err(js)
    }

    /// False-colour rectification encoding of the left or right view.
    pub fn encoding_rgba(&self, right: bool) -> Result<Vec<u8>, JsError> {
        self.encoding(right).map_err(js)
    }

    pub fn disparity_view(&self, use_rpe: bool, max_disparity: usize, heads: usize) -> Result<DisparityView, JsError> {
        self.disparity(use_rpe, max_disparity, heads).map_err(js)
    }
}
