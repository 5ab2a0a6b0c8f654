//! 2D sinusoidal positional encoding and the rectification positional
//! encoding (RPE) that carries a left→right homography into the right image.
//!
//! Channel `i` of the encoding at `(x, y)`:
//!
//! | `i mod 4` | value                       |
//! |-----------|-----------------------------|
//! | 0         | `sin(x / f^(i/d))`          |
//! | 1         | `cos(x / f^((i-1)/d))`      |
//! | 2         | `sin(y / f^(i/d))`          |
//! | 3         | `cos(y / f^((i-1)/d))`      |
//!
//! with frequency `f` (default 200) and exponent base `d` (default: the
//! channel count).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_matrix, Homography, Pixel};
use crate::tensor::{Dims, Tensor};

pub const DEFAULT_FREQUENCY: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingParams {
    pub channels: usize,
    pub frequency: f64,
    pub exponent_base: usize,
}

impl EncodingParams {
    /// `f = 200`, exponent base = `channels`.
    pub fn new(channels: usize) -> Result<Self> {
        let p = Self {
            channels,
            frequency: DEFAULT_FREQUENCY,
            exponent_base: channels,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_frequency(mut self, frequency: f64) -> Result<Self> {
        self.frequency = frequency;
        self.validate()?;
        Ok(self)
    }

    pub fn with_exponent_base(mut self, exponent_base: usize) -> Result<Self> {
        self.exponent_base = exponent_base;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.channels % 4 != 0 {
            return Err(Error::InvalidParameter(format!(
                "encoding channels must be a positive multiple of 4, got {}",
                self.channels
            )));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "encoding frequency must be > 0, got {}",
                self.frequency
            )));
        }
        if self.exponent_base == 0 {
            return Err(Error::InvalidParameter("exponent base must be >= 1".into()));
        }
        Ok(())
    }

    /// `2π·f` must exceed the longest side of the encoded map.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        let len = width.max(height) as f64;
        if 2.0 * std::f64::consts::PI * self.frequency <= len {
            return Err(Error::InvalidParameter(format!(
                "encoding frequency {} too low for a {width}x{height} map (need 2*pi*f > {len})",
                self.frequency
            )));
        }
        Ok(())
    }

    fn divisors(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|i| {
                let e = (i - i % 2) as f64 / self.exponent_base as f64;
                self.frequency.powf(e)
            })
            .collect()
    }
}

/// Whether map values are the raw sin/cos range or rescaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeTag {
    Raw,
    Rescaled,
}

/// `[1, C, H, W]` encoding map.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMap {
    tensor: Tensor,
    range: RangeTag,
}

impl EncodingMap {
    pub fn new(tensor: Tensor, range: RangeTag) -> Result<Self> {
        if tensor.dims().n != 1 {
            return Err(Error::InvalidShape(format!(
                "encoding maps have batch extent 1, got {}",
                tensor.dims()
            )));
        }
        let (lo, hi) = match range {
            RangeTag::Raw => (-1.0, 1.0),
            RangeTag::Rescaled => (0.0, 1.0),
        };
        if let Some(v) = tensor.data().iter().find(|&&v| v < lo || v > hi) {
            return Err(Error::InvalidParameter(format!(
                "encoding value {v} outside the {range:?} range [{lo}, {hi}]"
            )));
        }
        Ok(Self { tensor, range })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn range(&self) -> RangeTag {
        self.range
    }

    pub fn dims(&self) -> Dims {
        self.tensor.dims()
    }

    fn vector(&self, x: usize, y: usize) -> impl Iterator<Item = f32> + '_ {
        let d = self.tensor.dims();
        (0..d.c).map(move |c| self.tensor.at(0, c, y, x))
    }
}

/// Encoding vector of one (possibly sub-pixel) position.
pub fn positional_encoding(x: f64, y: f64, p: &EncodingParams) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(encode_with(&p.divisors(), x, y))
}

fn encode_with(divisors: &[f64], x: f64, y: f64) -> Vec<f64> {
    divisors
        .iter()
        .enumerate()
        .map(|(i, &div)| match i % 4 {
            0 => (x / div).sin(),
            1 => (x / div).cos(),
            2 => (y / div).sin(),
            _ => (y / div).cos(),
        })
        .collect()
}

fn encode_grid<F>(width: usize, height: usize, p: &EncodingParams, mut coord: F) -> Result<EncodingMap>
where
    F: FnMut(usize, usize) -> Result<Pixel>,
{
    p.validate_for(width, height)?;
    let divisors = p.divisors();
    let dims = Dims::new(1, p.channels, height, width);
    let plane = dims.plane();
    let mut data = vec![0.0f32; dims.len()];
    for y in 0..height {
        for x in 0..width {
            let q = coord(x, y)?;
            for (c, v) in encode_with(&divisors, q.x, q.y).into_iter().enumerate() {
                data[c * plane + y * width + x] = v as f32;
            }
        }
    }
    EncodingMap::new(Tensor::new(dims, data)?, RangeTag::Raw)
}

/// Plain positional encoding of the integer pixel grid.
pub fn pe_map(width: usize, height: usize, p: &EncodingParams) -> Result<EncodingMap> {
    encode_grid(width, height, p, |x, y| Ok(Pixel::new(x as f64, y as f64)))
}

/// How the right-image encoding is sampled from the homography.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RpeSampling {
    /// Right pixel `q_r` carries `PE(H⁻¹·q_r)`, the encoding of the left-frame
    /// position it corresponds to, so a left pixel and its match share a code.
    #[default]
    Inverse,
    /// Right pixel `q` carries `PE(H·q)`: the left grid mapped forward and
    /// stored at the left index.
    Forward,
}

/// Continuous coordinate whose encoding the right map stores at grid pixel `q`.
pub fn rpe_coordinate(h: &Homography, q: Pixel, sampling: RpeSampling) -> Result<Pixel> {
    match sampling {
        RpeSampling::Inverse => apply_matrix(h.inverse()?.matrix(), q),
        RpeSampling::Forward => apply_matrix(h.matrix(), q),
    }
}

/// Left plain encoding and right rectification encoding, both raw, with
/// [`RpeSampling::Inverse`].
pub fn rpe_map(
    h: &Homography,
    width: usize,
    height: usize,
    p: &EncodingParams,
) -> Result<(EncodingMap, EncodingMap)> {
    rpe_map_with(h, width, height, p, RpeSampling::default())
}

pub fn rpe_map_with(
    h: &Homography,
    width: usize,
    height: usize,
    p: &EncodingParams,
    sampling: RpeSampling,
) -> Result<(EncodingMap, EncodingMap)> {
    let left = pe_map(width, height, p)?;
    let m = match sampling {
        RpeSampling::Inverse => *h.inverse()?.matrix(),
        RpeSampling::Forward => *h.matrix(),
    };
    let right = encode_grid(width, height, p, |x, y| {
        apply_matrix(&m, Pixel::new(x as f64, y as f64))
    })?;
    Ok((left, right))
}

/// `v ↦ (v + 1) / 2`, turning a raw map into a `[0, 1]` map.
pub fn rescale_encoding(m: &EncodingMap) -> Result<EncodingMap> {
    if m.range == RangeTag::Rescaled {
        return Err(Error::Precondition("encoding map is already rescaled".into()));
    }
    let t = m.tensor.map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))?;
    EncodingMap::new(t, RangeTag::Rescaled)
}

/// Sampling and search window of [`encoding_match_score`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Spacing of the sampled left pixels.
    pub stride: usize,
    /// Half-width of the square search window centred on the left pixel's own coordinates.
    pub radius: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { stride: 2, radius: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    /// Fraction of samples whose nearest right encoding lies within 1 px of the true match.
    pub score: f64,
    pub samples: usize,
    /// Expected score of a uniformly random pick inside each sample's window.
    pub chance: f64,
}

pub fn encoding_match_score(
    left: &EncodingMap,
    right: &EncodingMap,
    true_map: &Homography,
) -> Result<MatchScore> {
    encoding_match_score_with(left, right, true_map, MatchOptions::default())
}

/// For each sampled left pixel, finds the right pixel in the search window
/// whose encoding vector is nearest (Euclidean; ties to smaller x, then
/// smaller y) and counts a hit when it lies within 1 px of
/// `apply_homography(true_map, q)`. Samples whose true match falls outside the
/// image or the window are skipped.
pub fn encoding_match_score_with(
    left: &EncodingMap,
    right: &EncodingMap,
    true_map: &Homography,
    opts: MatchOptions,
) -> Result<MatchScore> {
    right.tensor.require_dims(left.dims())?;
    if left.range != right.range {
        return Err(Error::Precondition(
            "left and right encoding maps use different ranges".into(),
        ));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let d = left.dims();
    let (w, h) = (d.w, d.h);
    let r = opts.radius;

    // pixel-major copy of the right map for cache-friendly window scans
    let right_vecs: Vec<f32> = (0..h)
        .flat_map(|y| (0..w).flat_map(move |x| right.vector(x, y)))
        .collect();

    let (mut hits, mut samples, mut chance) = (0usize, 0usize, 0.0f64);
    for y in (opts.stride / 2..h).step_by(opts.stride) {
        for x in (opts.stride / 2..w).step_by(opts.stride) {
            let truth = match apply_matrix(true_map.matrix(), Pixel::new(x as f64, y as f64)) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let inside = truth.x >= 0.0
                && truth.y >= 0.0
                && truth.x <= (w - 1) as f64
                && truth.y <= (h - 1) as f64;
            let in_window = (truth.x - x as f64).abs() <= r as f64 && (truth.y - y as f64).abs() <= r as f64;
            if !inside || !in_window {
                continue;
            }
            let lv: Vec<f32> = left.vector(x, y).collect();
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let mut best = (f64::INFINITY, x0, y0);
            let mut near = 0usize;
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    let off = (cy * w + cx) * d.c;
                    let dist: f64 = lv
                        .iter()
                        .zip(&right_vecs[off..off + d.c])
                        .map(|(&a, &b)| {
                            let e = a as f64 - b as f64;
                            e * e
                        })
                        .sum();
                    if dist < best.0 {
                        best = (dist, cx, cy);
                    }
                    if Pixel::new(cx as f64, cy as f64).distance(&truth) <= 1.0 {
                        near += 1;
                    }
                }
            }
            samples += 1;
            chance += near as f64 / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            if Pixel::new(best.1 as f64, best.2 as f64).distance(&truth) <= 1.0 {
                hits += 1;
            }
        }
    }
    if samples == 0 {
        return Err(Error::Empty(
            "no sampled left pixel has its true match inside the image and search window".into(),
        ));
    }
    Ok(MatchScore {
        score: hits as f64 / samples as f64,
        samples,
        chance: chance / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct transcription of the four-case definition.
    fn pe_oracle(x: f64, y: f64, c: usize, f: f64, d: f64) -> Vec<f64> {
        (0..c)
            .map(|i| match i % 4 {
                0 => (x / f.powf(i as f64 / d)).sin(),
                1 => (x / f.powf((i - 1) as f64 / d)).cos(),
                2 => (y / f.powf(i as f64 / d)).sin(),
                _ => (y / f.powf((i - 1) as f64 / d)).cos(),
            })
            .collect()
    }

    #[test]
    fn encoding_examples() {
        for c in [4, 8, 16] {
            let p = EncodingParams::new(c).unwrap();
            let v = positional_encoding(0.0, 0.0, &p).unwrap();
            for (i, x) in v.iter().enumerate() {
                assert_eq!(*x, if i % 2 == 0 { 0.0 } else { 1.0 });
            }
        }
        let p = EncodingParams::new(8).unwrap();
        for x in [0.3, 2.0, 17.5] {
            assert_eq!(positional_encoding(x, 4.0, &p).unwrap()[0], x.sin());
        }
        let got = positional_encoding(10.0, 20.0, &p).unwrap();
        let expect = pe_oracle(10.0, 20.0, 8, 200.0, 8.0);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(EncodingParams::new(6).is_err());
        assert!(EncodingParams::new(8).unwrap().with_frequency(0.0).is_err());
    }

    #[test]
    fn frequency_must_cover_map_length() {
        let p = EncodingParams::new(8).unwrap().with_frequency(10.0).unwrap();
        assert!(pe_map(64, 64, &p).is_err());
        assert!(pe_map(62, 10, &p).is_ok());
    }

    #[test]
    fn rpe_identity_is_bit_exact() {
        let p = EncodingParams::new(8).unwrap();
        for sampling in [RpeSampling::Inverse, RpeSampling::Forward] {
            let (l, r) = rpe_map_with(&Homography::identity(), 24, 16, &p, sampling).unwrap();
            assert_eq!(l, r);
        }
    }

    #[test]
    fn rpe_translation_shifts_the_map() {
        let p = EncodingParams::new(8).unwrap();
        let (tx, ty) = (3usize, 2usize);
        let h = Homography::translation(tx as f64, ty as f64);
        let (l, fwd) = rpe_map_with(&h, 20, 12, &p, RpeSampling::Forward).unwrap();
        let (_, inv) = rpe_map_with(&h, 20, 12, &p, RpeSampling::Inverse).unwrap();
        for y in 0..12 - ty {
            for x in 0..20 - tx {
                for c in 0..8 {
                    let a = fwd.tensor().at(0, c, y, x) as f64;
                    let b = l.tensor().at(0, c, y + ty, x + tx) as f64;
                    assert!((a - b).abs() <= 1e-9);
                    let a = inv.tensor().at(0, c, y + ty, x + tx) as f64;
                    let b = l.tensor().at(0, c, y, x) as f64;
                    assert!((a - b).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn rpe_values_stay_in_range() {
        let p = EncodingParams::new(12).unwrap();
        let h = Homography::new(Matrix3::new(0.98, 0.05, 4.0, -0.04, 1.01, -2.5, 1e-4, 2e-4, 1.0)).unwrap();
        let (l, r) = rpe_map(&h, 40, 30, &p).unwrap();
        for m in [&l, &r] {
            let (lo, hi) = m.tensor().min_max();
            assert!(lo >= -1.0 && hi <= 1.0);
        }
    }

    #[test]
    fn rpe_reports_point_at_infinity() {
        let h = Homography::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.125, 0.0, 1.0)).unwrap();
        let err = rpe_map_with(&h, 32, 8, &EncodingParams::new(4).unwrap(), RpeSampling::Forward);
        assert!(matches!(err, Err(Error::PointAtInfinity { .. })));
    }

    #[test]
    fn rpe_composition() {
        let p = EncodingParams::new(8).unwrap();
        let h1 = Homography::new(Matrix3::new(1.01, 0.02, 2.0, -0.01, 0.99, 1.0, 1e-4, 0.0, 1.0)).unwrap();
        let h2 = Homography::new(Matrix3::new(0.99, -0.03, -1.5, 0.02, 1.0, 0.5, 0.0, -1e-4, 1.0)).unwrap();
        let composed = h1.compose(&h2).unwrap();
        for sampling in [RpeSampling::Forward, RpeSampling::Inverse] {
            let (_, r) = rpe_map_with(&composed, 16, 12, &p, sampling).unwrap();
            for y in 0..12 {
                for x in 0..16 {
                    let q = Pixel::new(x as f64, y as f64);
                    // forward: H1·(H2·q); inverse: H2⁻¹·(H1⁻¹·q)
                    let seq = match sampling {
                        RpeSampling::Forward => rpe_coordinate(&h1, rpe_coordinate(&h2, q, sampling).unwrap(), sampling),
                        RpeSampling::Inverse => rpe_coordinate(&h2, rpe_coordinate(&h1, q, sampling).unwrap(), sampling),
                    }
                    .unwrap();
                    let direct = rpe_coordinate(&composed, q, sampling).unwrap();
                    assert!(seq.distance(&direct) <= 1e-9);
                    let v = positional_encoding(seq.x, seq.y, &p).unwrap();
                    for (c, &e) in v.iter().enumerate() {
                        assert!((r.tensor().at(0, c, y, x) as f64 - e).abs() <= 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn rescale_examples() {
        let t = Tensor::new(Dims::new(1, 4, 1, 1), vec![-1.0, 1.0, 0.0, 0.5]).unwrap();
        let m = EncodingMap::new(t, RangeTag::Raw).unwrap();
        let r = rescale_encoding(&m).unwrap();
        assert_eq!(r.tensor().data(), &[0.0, 1.0, 0.5, 0.75]);
        assert_eq!(r.range(), RangeTag::Rescaled);
        assert!(matches!(rescale_encoding(&r), Err(Error::Precondition(_))));

        let (l, _) = rpe_map(&Homography::translation(1.5, 0.0), 30, 20, &EncodingParams::new(8).unwrap()).unwrap();
        let (lo, hi) = rescale_encoding(&l).unwrap().tensor().min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn encoding_is_injective_on_desk_scale_grids() {
        // The code splits into an x-part and a y-part, so two grid pixels collide
        // only if both parts collide; checking every pair of columns and every
        // pair of rows covers all pixel pairs of a 384×288 grid.
        for c in [8, 16] {
            let p = EncodingParams::new(c).unwrap();
            let xs: Vec<Vec<f64>> = (0..384).map(|x| positional_encoding(x as f64, 0.0, &p).unwrap()).collect();
            let ys: Vec<Vec<f64>> = (0..288).map(|y| positional_encoding(0.0, y as f64, &p).unwrap()).collect();
            let part = |v: &Vec<f64>, r: [usize; 2]| -> Vec<f64> {
                v.iter().enumerate().filter(|(i, _)| r.contains(&(i % 4))).map(|(_, &x)| x).collect()
            };
            for (vals, r) in [(&xs, [0, 1]), (&ys, [2, 3])] {
                let parts: Vec<Vec<f64>> = vals.iter().map(|v| part(v, r)).collect();
                for i in 0..parts.len() {
                    for j in i + 1..parts.len() {
                        let d: f64 = parts[i].iter().zip(&parts[j]).map(|(a, b)| (a - b).powi(2)).sum();
                        assert!(d > 0.0, "collision between {i} and {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_scores_perfectly() {
        let p = EncodingParams::new(8).unwrap();
        let (l, r) = rpe_map(&Homography::identity(), 32, 32, &p).unwrap();
        let s = encoding_match_score(&l, &r, &Homography::identity()).unwrap();
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn rpe_beats_plain_encoding_under_shift() {
        let p = EncodingParams::new(8).unwrap();
        let h = Homography::translation(-10.0, 0.0);
        let (l, rpe) = rpe_map(&h, 64, 64, &p).unwrap();
        let plain = pe_map(64, 64, &p).unwrap();
        let with = encoding_match_score(&l, &rpe, &h).unwrap();
        let without = encoding_match_score(&l, &plain, &h).unwrap();
        assert!(with.score > without.score, "{with:?} vs {without:?}");
    }

    #[test]
    fn noise_maps_score_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut noise = || {
            let t = Tensor::from_fn(Dims::new(1, 8, 64, 64), |_, _, _, _| rng.random_range(0.0..1.0)).unwrap();
            EncodingMap::new(t, RangeTag::Rescaled).unwrap()
        };
        let (l, r) = (noise(), noise());
        let h = Homography::translation(-4.0, 1.0);
        let s = encoding_match_score_with(&l, &r, &h, MatchOptions { stride: 1, radius: 6 }).unwrap();
        let sigma = (s.chance * (1.0 - s.chance) / s.samples as f64).sqrt();
        assert!((s.score - s.chance).abs() <= 3.0 * sigma, "{s:?}");
    }

    #[test]
    fn empty_sample_set_is_an_error() {
        let p = EncodingParams::new(4).unwrap();
        let (l, r) = rpe_map(&Homography::identity(), 16, 16, &p).unwrap();
        let far = Homography::translation(100.0, 0.0);
        assert!(matches!(encoding_match_score(&l, &r, &far), Err(Error::Empty(_))));
    }
}
