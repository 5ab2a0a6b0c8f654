use serde::{Deserialize, Serialize};

use super::{Dims, Tensor};
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk;

pub const DEFAULT_LAYER_NORM_EPS: f32 = 1e-5;

/// Per-channel affine parameters of a channel-wise layer norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub epsilon: f32,
}

impl LayerNormParams {
    /// Pure normalizer: `gamma = 1`, `beta = 0`.
    pub fn identity(channels: usize, epsilon: f32) -> Result<Self> {
        Self::new(vec![1.0; channels], vec![0.0; channels], epsilon)
    }

    pub fn new(gamma: Vec<f32>, beta: Vec<f32>, epsilon: f32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "layer norm epsilon must be > 0, got {epsilon}"
            )));
        }
        if gamma.len() != beta.len() || gamma.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "gamma ({}) and beta ({}) must have the same non-zero length",
                gamma.len(),
                beta.len()
            )));
        }
        Ok(Self { gamma, beta, epsilon })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, channels: usize) -> Result<()> {
        if self.channels() != channels {
            return Err(Error::InvalidParameter(format!(
                "layer norm parameters cover {} channels, tensor has {}",
                self.channels(),
                channels
            )));
        }
        Ok(())
    }
}

/// Weights of a grouped 1×1 convolution: `groups` groups, each mapping
/// `in_per_group` channels onto `out_per_group` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConvWeights {
    pub groups: usize,
    pub in_per_group: usize,
    pub out_per_group: usize,
    /// Laid out `[group][out][in]`.
    pub weights: Vec<f32>,
    /// Laid out `[group][out]`.
    pub bias: Option<Vec<f32>>,
}

impl GroupConvWeights {
    pub fn new(
        groups: usize,
        in_per_group: usize,
        out_per_group: usize,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        if groups == 0 || in_per_group == 0 || out_per_group == 0 {
            return Err(Error::InvalidParameter(
                "group conv extents must be >= 1".into(),
            ));
        }
        if weights.len() != groups * out_per_group * in_per_group {
            return Err(Error::InvalidParameter(format!(
                "expected {} weights, got {}",
                groups * out_per_group * in_per_group,
                weights.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != groups * out_per_group {
                return Err(Error::InvalidParameter(format!(
                    "expected {} bias values, got {}",
                    groups * out_per_group,
                    b.len()
                )));
            }
        }
        if weights.iter().chain(bias.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite conv weight".into()));
        }
        Ok(Self {
            groups,
            in_per_group,
            out_per_group,
            weights,
            bias,
        })
    }

    /// Every group shares the same `[out][in]` weight block.
    pub fn shared(groups: usize, in_per_group: usize, out_per_group: usize, block: &[f32]) -> Result<Self> {
        let weights = block
            .iter()
            .copied()
            .cycle()
            .take(groups * block.len())
            .collect();
        Self::new(groups, in_per_group, out_per_group, weights, None)
    }

    #[inline]
    pub fn weight(&self, group: usize, out: usize, input: usize) -> f32 {
        self.weights[(group * self.out_per_group + out) * self.in_per_group + input]
    }

    #[inline]
    pub fn bias_of(&self, group: usize, out: usize) -> f32 {
        self.bias
            .as_ref()
            .map_or(0.0, |b| b[group * self.out_per_group + out])
    }
}

/// Circular right-shift along the width axis: `out[.., w] = in[.., (w - offset) mod W]`.
pub fn roll_horizontal(t: &Tensor, offset: usize) -> Tensor {
    let d = t.dims();
    let shift = offset % d.w;
    let mut out = Vec::with_capacity(t.data().len());
    for row in t.data().chunks_exact(d.w) {
        out.extend_from_slice(&row[d.w - shift..]);
        out.extend_from_slice(&row[..d.w - shift]);
    }
    Tensor::from_raw(d, out)
}

/// Layer norm over the channel vector of every pixel, population variance.
pub fn layer_norm_channel(t: &Tensor, p: &LayerNormParams) -> Result<Tensor> {
    let d = t.dims();
    p.check(d.c)?;
    let mut out = vec![0.0f32; d.len()];
    let plane = d.plane();
    let batch = d.c * plane;
    let src = t.data();
    let inv_c = 1.0 / d.c as f64;
    for_each_chunk(&mut out, batch, |n, dst| {
        let x = &src[n * batch..(n + 1) * batch];
        let mut mean = vec![0.0f64; plane];
        for c in 0..d.c {
            for (m, &v) in mean.iter_mut().zip(&x[c * plane..(c + 1) * plane]) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_c);
        let mut var = vec![0.0f64; plane];
        for c in 0..d.c {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(&x[c * plane..(c + 1) * plane]) {
                let e = v as f64 - m;
                *s += e * e;
            }
        }
        let eps = p.epsilon as f64;
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s * inv_c + eps).sqrt()).collect();
        for c in 0..d.c {
            let (g, b) = (p.gamma[c] as f64, p.beta[c] as f64);
            let xs = &x[c * plane..(c + 1) * plane];
            let ys = &mut dst[c * plane..(c + 1) * plane];
            for i in 0..plane {
                ys[i] = ((xs[i] as f64 - mean[i]) * inv_std[i] * g + b) as f32;
            }
        }
    });
    Tensor::new(d, out)
}

/// Grouped 1×1 convolution; output has `groups * out_per_group` channels.
pub fn group_pointwise_conv(t: &Tensor, w: &GroupConvWeights) -> Result<Tensor> {
    let d = t.dims();
    if d.c != w.groups * w.in_per_group {
        return Err(Error::ShapeMismatch {
            expected: vec![d.n, w.groups * w.in_per_group, d.h, d.w],
            found: d.to_vec(),
        });
    }
    let out_c = w.groups * w.out_per_group;
    let out_dims = Dims::new(d.n, out_c, d.h, d.w);
    let plane = d.plane();
    let mut out = vec![0.0f32; out_dims.len()];
    for_each_chunk(&mut out, plane, |idx, dst| {
        let (n, oc) = (idx / out_c, idx % out_c);
        let (g, o) = (oc / w.out_per_group, oc % w.out_per_group);
        let mut acc = vec![w.bias_of(g, o) as f64; plane];
        for j in 0..w.in_per_group {
            let k = w.weight(g, o, j) as f64;
            for (a, &v) in acc.iter_mut().zip(t.plane(n, g * w.in_per_group + j)) {
                *a += k * v as f64;
            }
        }
        for (y, a) in dst.iter_mut().zip(acc) {
            *y = a as f32;
        }
    });
    Tensor::new(out_dims, out)
}

/// 2×2 mean pooling; odd trailing rows and columns are dropped.
pub fn subsample2(t: &Tensor) -> Result<Tensor> {
    let d = t.dims();
    if d.h < 2 || d.w < 2 {
        return Err(Error::InvalidShape(format!(
            "subsample2 needs H, W >= 2, got {d}"
        )));
    }
    let od = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
    let mut out = Vec::with_capacity(od.len());
    for n in 0..d.n {
        for c in 0..d.c {
            for h in 0..od.h {
                for w in 0..od.w {
                    let s = t.at(n, c, 2 * h, 2 * w)
                        + t.at(n, c, 2 * h, 2 * w + 1)
                        + t.at(n, c, 2 * h + 1, 2 * w)
                        + t.at(n, c, 2 * h + 1, 2 * w + 1);
                    out.push(s * 0.25);
                }
            }
        }
    }
    Tensor::new(od, out)
}

/// Forward differences along width and height; the trailing column/row is zero.
pub fn spatial_gradient(t: &Tensor) -> Result<(Tensor, Tensor)> {
    let d = t.dims();
    if d.h < 2 || d.w < 2 {
        return Err(Error::InvalidShape(format!(
            "spatial_gradient needs H, W >= 2, got {d}"
        )));
    }
    let mut gx = vec![0.0f32; d.len()];
    let mut gy = vec![0.0f32; d.len()];
    let src = t.data();
    for (p, plane) in src.chunks_exact(d.plane()).enumerate() {
        let base = p * d.plane();
        for h in 0..d.h {
            for w in 0..d.w {
                let i = h * d.w + w;
                if w + 1 < d.w {
                    gx[base + i] = plane[i + 1] - plane[i];
                }
                if h + 1 < d.h {
                    gy[base + i] = plane[i + d.w] - plane[i];
                }
            }
        }
    }
    Ok((Tensor::new(d, gx)?, Tensor::new(d, gy)?))
}
