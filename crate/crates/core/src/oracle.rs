//! Scalar reference implementations.
//!
//! Literal per-pixel loops written independently of the optimized kernels
//! (no shared helpers beyond [`Tensor`] indexing). They instrument every
//! multiply-accumulate so the closed-form MAC formulas can be checked against
//! an actual operation count. Used by the property suite and `check`.

use crate::tensor::{Dims, GroupConvWeights, Tensor};

/// Counts multiply-accumulate operations as they are executed.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MacCounter {
    pub count: u64,
}

impl MacCounter {
    #[inline]
    fn mac(&mut self, acc: f64, a: f64, b: f64) -> f64 {
        self.count += 1;
        acc + a * b
    }
}

fn pixel_vector(t: &Tensor, n: usize, h: usize, w: usize) -> Vec<f64> {
    (0..t.dims().c).map(|c| t.at(n, c, h, w) as f64).collect()
}

/// Channel layer norm with `γ = 1`, `β = 0`; three MACs per element
/// (mean accumulation, variance accumulation, scale and shift).
pub fn layer_norm(t: &Tensor, epsilon: f64, macs: &mut MacCounter) -> Tensor {
    let d = t.dims();
    let mut out = Tensor::zeros(d).expect("valid dims").into_data();
    for n in 0..d.n {
        for h in 0..d.h {
            for w in 0..d.w {
                let x = pixel_vector(t, n, h, w);
                let mut sum = 0.0;
                for &v in &x {
                    sum = macs.mac(sum, v, 1.0);
                }
                let mean = sum / d.c as f64;
                let mut sq = 0.0;
                for &v in &x {
                    sq = macs.mac(sq, v - mean, v - mean);
                }
                let inv_std = 1.0 / (sq / d.c as f64 + epsilon).sqrt();
                for (c, &v) in x.iter().enumerate() {
                    let (gamma, beta) = (1.0, 0.0);
                    let y = macs.mac(beta, (v - mean) * inv_std, gamma);
                    out[((n * d.c + c) * d.h + h) * d.w + w] = y as f32;
                }
            }
        }
    }
    Tensor::new(d, out).expect("finite layer norm output")
}

/// Explicit copy implementing "right-shift by `i`, rightmost `i` columns wrap to the left".
pub fn roll(t: &Tensor, i: usize) -> Tensor {
    let d = t.dims();
    Tensor::from_fn(d, |n, c, h, w| t.at(n, c, h, (w + d.w - i % d.w) % d.w)).expect("valid dims")
}

/// Cosine similarity `a·b / (|a||b|)` at every roll offset `0..max_disparity`;
/// 3 MACs per channel per pixel per disparity. Zero-norm pairs score 0.
pub fn cosine_cost_volume(left: &Tensor, right: &Tensor, max_disparity: usize, macs: &mut MacCounter) -> Tensor {
    let d = left.dims();
    let mut out = vec![0.0f32; d.n * max_disparity * d.h * d.w];
    for i in 0..max_disparity {
        let shifted = roll(right, i);
        for n in 0..d.n {
            for h in 0..d.h {
                for w in 0..d.w {
                    let (a, b) = (pixel_vector(left, n, h, w), pixel_vector(&shifted, n, h, w));
                    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
                    for c in 0..d.c {
                        dot = macs.mac(dot, a[c], b[c]);
                        aa = macs.mac(aa, a[c], a[c]);
                        bb = macs.mac(bb, b[c], b[c]);
                    }
                    let den = (aa * bb).sqrt();
                    out[((n * max_disparity + i) * d.h + h) * d.w + w] =
                        if den > 0.0 { (dot / den) as f32 } else { 0.0 };
                }
            }
        }
    }
    Tensor::new(Dims::new(d.n, max_disparity, d.h, d.w), out).expect("finite cosine volume")
}

/// Line-by-line transcription of the multi-head cost volume algorithm:
/// layer-norm both sides (optionally adding encodings), then for every
/// disparity roll the right side, take per-head dot products over channel
/// slices of stride `C / heads`, optionally scale by `1/sqrt(stride)`, and fuse
/// the heads with that disparity's pointwise weights.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_cost_volume(
    left: &Tensor,
    right: &Tensor,
    max_disparity: usize,
    head_num: usize,
    dot_scale: bool,
    epsilon: f64,
    pointwise: &GroupConvWeights,
    encodings: Option<(&Tensor, &Tensor)>,
    macs: &mut MacCounter,
) -> Tensor {
    let d = left.dims();
    let s = d.c / head_num;
    let mut left_norm = layer_norm(left, epsilon, macs);
    let mut right_norm = layer_norm(right, epsilon, macs);
    if let Some((el, er)) = encodings {
        left_norm = Tensor::from_fn(d, |n, c, h, w| left_norm.at(n, c, h, w) + el.at(0, c, h, w)).unwrap();
        right_norm = Tensor::from_fn(d, |n, c, h, w| right_norm.at(n, c, h, w) + er.at(0, c, h, w)).unwrap();
    }
    let scale = if dot_scale { 1.0 / (s as f64).sqrt() } else { 1.0 };
    let mut cost_volume = vec![0.0f32; d.n * max_disparity * d.h * d.w];
    for i in 0..max_disparity {
        let right_shifted = roll(&right_norm, i);
        for n in 0..d.n {
            for y in 0..d.h {
                for x in 0..d.w {
                    let mut similarity = vec![0.0f64; head_num];
                    for (h, sim) in similarity.iter_mut().enumerate() {
                        let mut dot = 0.0;
                        for c in h * s..(h + 1) * s {
                            dot = macs.mac(
                                dot,
                                left_norm.at(n, c, y, x) as f64,
                                right_shifted.at(n, c, y, x) as f64,
                            );
                        }
                        *sim = dot * scale;
                    }
                    let mut v = pointwise.bias_of(i, 0) as f64;
                    for (h, sim) in similarity.iter().enumerate() {
                        v += pointwise.weight(i, 0, h) as f64 * sim;
                    }
                    cost_volume[((n * max_disparity + i) * d.h + y) * d.w + x] = v as f32;
                }
            }
        }
    }
    Tensor::new(Dims::new(d.n, max_disparity, d.h, d.w), cost_volume).expect("finite cost volume")
}

/// Cosine similarity of the mean-centred vectors; 0 if either is constant.
pub fn centered_cosine(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        dot / (aa * bb).sqrt()
    }
}

/// Population variance of a channel vector.
pub fn variance(a: &[f64]) -> f64 {
    let m = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / a.len() as f64
}
