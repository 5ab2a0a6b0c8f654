//! Deterministic synthetic stereo scenes: a textured plane seen by two cameras.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costvol::{argmax_disparity, multi_head_cost_volume, CostVolumeConfig};
use crate::encoding::{rescale_encoding, rpe_map, EncodingParams};
use crate::error::{Error, Result};
use crate::geometry::{
    apply_matrix, plane_homography_matrix, rotation_z, CameraIntrinsics, Homography, Pixel,
};
use crate::tensor::{Dims, Tensor};

pub const MIN_EXTENT: usize = 16;
/// Largest vertical offset between true correspondences the demo accepts.
pub const MAX_VERTICAL_DRIFT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    Checker,
    ValueNoise,
    RandomDots,
}

impl Texture {
    pub const ALL: [Texture; 3] = [Texture::Checker, Texture::ValueNoise, Texture::RandomDots];

    pub fn as_str(&self) -> &'static str {
        match self {
            Texture::Checker => "checker",
            Texture::ValueNoise => "value-noise",
            Texture::RandomDots => "random-dots",
        }
    }
}

impl fmt::Display for Texture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Texture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Texture::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown texture '{s}' (valid: checker, value-noise, random-dots)"
                ))
            })
    }
}

/// Two-camera rig observing the plane `nᵀX = plane_depth`. Matrices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub k_left: [f64; 9],
    pub k_right: [f64; 9],
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub normal: [f64; 3],
}

impl Rig {
    /// Shared intrinsics with focal `f` and the principal point at the image centre.
    pub fn rectified(focal: f64, width: usize, height: usize, baseline: f64) -> Self {
        let k = [
            focal,
            0.0,
            (width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        ];
        Self {
            k_left: k,
            k_right: k,
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [baseline, 0.0, 0.0],
            normal: [0.0, 0.0, 1.0],
        }
    }

    /// Replaces the rotation with a roll of `degrees` about the optical axis.
    pub fn with_roll(mut self, degrees: f64) -> Self {
        let r = rotation_z(degrees.to_radians());
        self.rotation = row_major(&r);
        self
    }

    fn k_left(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_matrix(Matrix3::from_row_slice(&self.k_left))
    }

    fn k_right(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_matrix(Matrix3::from_row_slice(&self.k_right))
    }
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub texture: Texture,
    /// Feature size of the texture in pixels (checker square, noise lattice, dot spacing).
    pub texture_scale: f64,
    pub plane_depth: f64,
    pub rig: Rig,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// 96×96 value noise, disparity 10 px, right camera rolled by 2°.
    fn default() -> Self {
        Self::rectified().with_rig(Self::rectified().rig.with_roll(2.0))
    }
}

impl SceneSpec {
    /// Default scene without the roll: constant 10 px disparity.
    pub fn rectified() -> Self {
        let (width, height, focal, plane_depth) = (96, 96, 64.0, 10.0);
        Self {
            width,
            height,
            channels: 3,
            texture: Texture::ValueNoise,
            texture_scale: 3.0,
            plane_depth,
            rig: Rig::rectified(focal, width, height, 10.0 * plane_depth / focal),
            seed: 0,
        }
    }

    /// Both cameras coincide.
    pub fn identity() -> Self {
        let s = Self::rectified();
        let rig = Rig::rectified(64.0, s.width, s.height, 0.0);
        s.with_rig(rig)
    }

    pub fn with_rig(mut self, rig: Rig) -> Self {
        self.rig = rig;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_texture(mut self, texture: Texture) -> Self {
        self.texture = texture;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_EXTENT || self.height < MIN_EXTENT {
            return Err(Error::InvalidParameter(format!(
                "scene extents must be >= {MIN_EXTENT}, got {}x{}",
                self.width, self.height
            )));
        }
        if self.channels == 0 {
            return Err(Error::InvalidParameter("channels must be >= 1".into()));
        }
        if !(self.plane_depth > 0.0 && self.plane_depth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "plane_depth must be > 0, got {}",
                self.plane_depth
            )));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "texture_scale must be > 0, got {}",
                self.texture_scale
            )));
        }
        Ok(())
    }

    /// Unnormalized plane-induced map; errors if the plane is not in front of both cameras.
    fn plane_matrix(&self) -> Result<Matrix3<f64>> {
        let k_l = self.rig.k_left()?;
        let k_r = self.rig.k_right()?;
        let r = Matrix3::from_row_slice(&self.rig.rotation);
        let t = Vector3::from_row_slice(&self.rig.translation);
        let n = Vector3::from_row_slice(&self.rig.normal);
        let g = plane_homography_matrix(&k_l, &k_r, &r, &t, &n, self.plane_depth)?;
        let k_l_inv = k_l
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::Singular("left intrinsics".into()))?;
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let q = Vector3::new(x, y, 1.0);
            if (n.transpose() * k_l_inv * q)[0] <= 0.0 || (g * q).z <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "plane is behind a camera at left pixel ({x}, {y})"
                )));
            }
        }
        Ok(g)
    }
}

/// Procedural texture over continuous left-image coordinates, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TextureField {
    kind: Texture,
    scale: f64,
    channels: Vec<ChannelField>,
}

#[derive(Debug, Clone)]
struct ChannelField {
    offset: (f64, f64),
    angle: f64,
    lattice: Vec<f64>,
    cols: usize,
    dots: Vec<(f64, f64, f64)>,
}

impl TextureField {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let s = spec.texture_scale;
        let cols = (spec.width as f64 / s).ceil() as usize + 3;
        let rows = (spec.height as f64 / s).ceil() as usize + 3;
        let channels = (0..spec.channels)
            .map(|_| {
                let offset = (rng.random_range(0.0..2.0 * s), rng.random_range(0.0..2.0 * s));
                let angle = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
                let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
                let dots = (0..cols * rows)
                    .map(|_| (rng.random::<f64>(), rng.random::<f64>(), rng.random_range(0.5..1.0)))
                    .collect();
                ChannelField {
                    offset,
                    angle,
                    lattice,
                    cols,
                    dots,
                }
            })
            .collect();
        Ok(Self {
            kind: spec.texture,
            scale: s,
            channels,
        })
    }

    pub fn sample(&self, c: usize, x: f64, y: f64) -> f64 {
        let ch = &self.channels[c];
        let s = self.scale;
        match self.kind {
            Texture::Checker => {
                let (sin, cos) = ch.angle.sin_cos();
                let (u, v) = (x * cos + y * sin, y * cos - x * sin);
                let i = ((u + ch.offset.0) / s).floor() as i64 + ((v + ch.offset.1) / s).floor() as i64;
                i.rem_euclid(2) as f64
            }
            Texture::ValueNoise => {
                let (u, v) = ((x + s) / s, (y + s) / s);
                let (i, j) = (lattice_index(u, ch.cols), lattice_index(v, ch.lattice.len() / ch.cols));
                let (fu, fv) = (smoothstep(u - i as f64), smoothstep(v - j as f64));
                let at = |a: usize, b: usize| ch.lattice[b * ch.cols + a];
                let top = at(i, j) * (1.0 - fu) + at(i + 1, j) * fu;
                let bottom = at(i, j + 1) * (1.0 - fu) + at(i + 1, j + 1) * fu;
                top * (1.0 - fv) + bottom * fv
            }
            Texture::RandomDots => {
                let (u, v) = ((x + s) / s, (y + s) / s);
                let rows = ch.lattice.len() / ch.cols;
                let (i, j) = (lattice_index(u, ch.cols), lattice_index(v, rows));
                let sigma = 0.25 * s;
                let mut best = 0.0f64;
                for b in j.saturating_sub(1)..(j + 2).min(rows) {
                    for a in i.saturating_sub(1)..(i + 2).min(ch.cols) {
                        let (jx, jy, amp) = ch.dots[b * ch.cols + a];
                        let (cx, cy) = ((a as f64 + jx) * s - s, (b as f64 + jy) * s - s);
                        let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                        best = best.max(amp * (-r2 / (2.0 * sigma * sigma)).exp());
                    }
                }
                best
            }
        }
    }
}

fn lattice_index(u: f64, extent: usize) -> usize {
    (u.floor().max(0.0) as usize).min(extent - 2)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub left: Tensor,
    pub right: Tensor,
    /// Left-frame disparity `x_l − (H q_l).x`.
    pub gt_disparity: Tensor,
    pub gt_homography: Homography,
    /// Right-frame mask: 1 where the preimage of the right pixel lies inside the left image.
    pub validity: Tensor,
}

impl StereoSample {
    /// Left-frame mask: 1 where `H q_l` lands inside the right image.
    pub fn left_validity(&self) -> Result<Tensor> {
        let d = self.gt_disparity.dims();
        let (w, h) = ((d.w - 1) as f64, (d.h - 1) as f64);
        let m = self.gt_homography.matrix();
        let mut err = None;
        let t = Tensor::from_fn(d, |_, _, y, x| match apply_matrix(m, Pixel::new(x as f64, y as f64)) {
            Ok(p) => (p.x >= 0.0 && p.y >= 0.0 && p.x <= w && p.y <= h) as u8 as f32,
            Err(e) => {
                err = Some(e);
                0.0
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(t),
        }
    }

    pub fn validity_fraction(&self) -> f64 {
        self.validity.mean()
    }
}

pub fn render_left(spec: &SceneSpec) -> Result<Tensor> {
    let field = TextureField::new(spec)?;
    Tensor::from_fn(Dims::new(1, spec.channels, spec.height, spec.width), |_, c, y, x| {
        field.sample(c, x as f64, y as f64) as f32
    })
}

pub fn generate_scene(spec: &SceneSpec) -> Result<StereoSample> {
    spec.validate()?;
    let g = spec.plane_matrix()?;
    let gt_homography = Homography::new(g)?;
    let left = render_left(spec)?;
    let (right, validity) = warp_with_homography(&left, &gt_homography)?;
    let mut err = None;
    let gt_disparity = Tensor::from_fn(Dims::new(1, 1, spec.height, spec.width), |_, _, y, x| {
        match apply_matrix(&g, Pixel::new(x as f64, y as f64)) {
            Ok(p) => (x as f64 - p.x) as f32,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(StereoSample {
        left,
        right,
        gt_disparity,
        gt_homography,
        validity,
    })
}

/// Inverse warp: `out[q] = bilinear(img, H⁻¹ q)`. Pixels whose preimage leaves
/// the image are 0 in the output and 0 in the `[N, 1, H, W]` validity mask.
pub fn warp_with_homography(img: &Tensor, h: &Homography) -> Result<(Tensor, Tensor)> {
    let d = img.dims();
    let inv = *h.inverse()?.matrix();
    let (wmax, hmax) = ((d.w - 1) as f64, (d.h - 1) as f64);
    const EDGE: f64 = 1e-9;
    let mut sources = Vec::with_capacity(d.plane());
    for y in 0..d.h {
        for x in 0..d.w {
            let p = apply_matrix(&inv, Pixel::new(x as f64, y as f64))?;
            let inside = p.x >= -EDGE && p.y >= -EDGE && p.x <= wmax + EDGE && p.y <= hmax + EDGE;
            sources.push(inside.then(|| (p.x.clamp(0.0, wmax), p.y.clamp(0.0, hmax))));
        }
    }
    let out = Tensor::from_fn(d, |n, c, y, x| match sources[y * d.w + x] {
        Some((sx, sy)) => bilinear(img, n, c, sx, sy),
        None => 0.0,
    })?;
    let validity = Tensor::from_fn(Dims::new(d.n, 1, d.h, d.w), |_, _, y, x| {
        sources[y * d.w + x].is_some() as u8 as f32
    })?;
    Ok((out, validity))
}

fn bilinear(img: &Tensor, n: usize, c: usize, x: f64, y: f64) -> f32 {
    let d = img.dims();
    let x0 = (x.floor() as usize).min(d.w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(d.h.saturating_sub(2));
    let (x1, y1) = ((x0 + 1).min(d.w - 1), (y0 + 1).min(d.h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = |xx: usize, yy: usize| img.at(n, c, yy, xx) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Side of the pixel neighbourhood stacked by [`patch_features`].
pub const PATCH: usize = 4;

/// Stacks each pixel's `PATCH×PATCH` neighbourhood (right and down, edge-clamped)
/// along channels: `C → 16C`, channel `c·16 + dy·4 + dx`.
pub fn patch_features(img: &Tensor) -> Result<Tensor> {
    let d = img.dims();
    let k = PATCH * PATCH;
    Tensor::from_fn(Dims::new(d.n, k * d.c, d.h, d.w), |n, c, y, x| {
        let (dx, dy) = (c % PATCH, (c % k) / PATCH);
        img.at(n, c / k, (y + dy).min(d.h - 1), (x + dx).min(d.w - 1))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub use_rpe: bool,
    pub max_disparity: usize,
    pub heads: usize,
    /// Mean `|argmax − gt|` over left pixels whose true match is inside the right image.
    pub mean_abs_error: f64,
    /// Fraction of those pixels with error above 1 px.
    pub bad_pixel_fraction: f64,
    pub evaluated_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub report: DemoReport,
    pub disparity: Tensor,
}

/// Multi-head cost volume on raw image patches, optionally with rectification
/// positional encodings from the ground-truth homography, read out by argmax.
pub fn end_to_end_demo(spec: &SceneSpec, cfg: &CostVolumeConfig, use_rpe: bool) -> Result<DemoOutcome> {
    let sample = generate_scene(spec)?;
    demo_on_sample(&sample, cfg, use_rpe)
}

pub fn demo_on_sample(sample: &StereoSample, cfg: &CostVolumeConfig, use_rpe: bool) -> Result<DemoOutcome> {
    let mask = sample.left_validity()?;
    let dims = sample.gt_disparity.dims();
    let m = sample.gt_homography.matrix();
    let (mut lo, mut hi, mut drift) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for y in 0..dims.h {
        for x in 0..dims.w {
            if mask.at(0, 0, y, x) == 0.0 {
                continue;
            }
            let g = sample.gt_disparity.at(0, 0, y, x) as f64;
            lo = lo.min(g);
            hi = hi.max(g);
            let p = apply_matrix(m, Pixel::new(x as f64, y as f64))?;
            drift = drift.max((p.y - y as f64).abs());
        }
    }
    if !lo.is_finite() {
        return Err(Error::Empty("no left pixel has its match inside the right image".into()));
    }
    if hi > (cfg.max_disparity - 1) as f64 + 0.5 || lo < -0.5 {
        return Err(Error::Precondition(format!(
            "true disparities span [{lo:.2}, {hi:.2}] but the cost volume covers 0..={}",
            cfg.max_disparity - 1
        )));
    }
    if drift > MAX_VERTICAL_DRIFT {
        return Err(Error::Precondition(format!(
            "vertical drift {drift:.2} px exceeds {MAX_VERTICAL_DRIFT} px"
        )));
    }

    let left = patch_features(&sample.left)?;
    let right = patch_features(&sample.right)?;
    let cv = if use_rpe {
        let p = EncodingParams::new(left.dims().c)?;
        let (el, er) = rpe_map(&sample.gt_homography, dims.w, dims.h, &p)?;
        let (el, er) = (rescale_encoding(&el)?, rescale_encoding(&er)?);
        multi_head_cost_volume(&left, &right, cfg, Some((&el, &er)))?
    } else {
        multi_head_cost_volume(&left, &right, cfg, None)?
    };
    let disparity = argmax_disparity(&cv);

    let (mut sum, mut bad, mut count) = (0.0, 0usize, 0usize);
    for ((&p, &g), &v) in disparity.data().iter().zip(sample.gt_disparity.data()).zip(mask.data()) {
        if v == 0.0 {
            continue;
        }
        let e = (p as f64 - g as f64).abs();
        sum += e;
        bad += (e > 1.0) as usize;
        count += 1;
    }
    Ok(DemoOutcome {
        report: DemoReport {
            use_rpe,
            max_disparity: cfg.max_disparity,
            heads: cfg.head_num,
            mean_abs_error: sum / count as f64,
            bad_pixel_fraction: bad as f64 / count as f64,
            evaluated_pixels: count,
        },
        disparity,
    })
}
