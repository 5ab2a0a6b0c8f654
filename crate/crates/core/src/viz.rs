//! Similarity-map and encoding views shared by the command line and the browser demo.

use serde::{Deserialize, Serialize};

use crate::costvol::{
    cost_volume_cosine, cost_volume_lnd, multi_head_cost_volume, CostKind, CostVolumeConfig,
};
use crate::encoding::EncodingMap;
use crate::error::{Error, Result};
use crate::synth::patch_features;
use crate::tensor::{Dims, LayerNormParams, Tensor, DEFAULT_LAYER_NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub min: f32,
    pub max: f32,
    pub mean: f64,
}

impl MapStats {
    pub fn of(t: &Tensor) -> Self {
        let (min, max) = t.min_max();
        Self {
            min,
            max,
            mean: t.mean(),
        }
    }
}

/// One `[1, 1, H, W]` similarity map per cost-volume kind at a single roll offset.
#[derive(Debug, Clone)]
pub struct SimilarityMaps {
    pub offset: usize,
    pub cosine: Tensor,
    pub lnd: Tensor,
    pub multihead: Tensor,
}

impl SimilarityMaps {
    pub fn get(&self, kind: CostKind) -> &Tensor {
        match kind {
            CostKind::Cosine => &self.cosine,
            CostKind::Lnd => &self.lnd,
            CostKind::MultiHead => &self.multihead,
        }
    }
}

/// Similarity of every left pixel with the right image rolled by `offset`,
/// computed on the 4×4 patch features of `[1, C, H, W]` images.
pub fn similarity_maps(left: &Tensor, right: &Tensor, offset: usize, heads: usize) -> Result<SimilarityMaps> {
    right.require_dims(left.dims())?;
    if left.dims().n != 1 {
        return Err(Error::InvalidShape("similarity maps take a single image pair".into()));
    }
    let (fl, fr) = (patch_features(left)?, patch_features(right)?);
    let d = offset + 1;
    let c = fl.dims().c;
    let cosine = cost_volume_cosine(&fl, &fr, d)?.slice(offset)?;
    let lnd = cost_volume_lnd(&fl, &fr, d, &LayerNormParams::identity(c, DEFAULT_LAYER_NORM_EPS)?)?
        .slice(offset)?;
    let multihead = multi_head_cost_volume(&fl, &fr, &CostVolumeConfig::new(d, heads)?, None)?.slice(offset)?;
    Ok(SimilarityMaps {
        offset,
        cosine,
        lnd,
        multihead,
    })
}

/// Min-max rescale to `[0, 1]`; constant maps become 0.
pub fn rescale_unit(t: &Tensor) -> Result<Tensor> {
    let (lo, hi) = t.min_max();
    let span = hi - lo;
    if span > 0.0 {
        t.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
    } else {
        t.map(|_| 0.0)
    }
}

/// `[1, 3, H, W]` view of a rescaled encoding: the lowest-frequency x sine, y
/// sine and x cosine as red, green and blue.
pub fn encoding_false_colour(m: &EncodingMap) -> Result<Tensor> {
    let t = m.tensor();
    let d = t.dims();
    let base = d.c - 4;
    let channels = [base, base + 2, base + 1];
    Tensor::from_fn(Dims::new(1, 3, d.h, d.w), |_, c, y, x| t.at(0, channels[c], y, x))
}

/// Row-major RGBA bytes of a `[1, 1, H, W]` map in `[0, 1]` (grey) or a `[1, 3, H, W]` image.
pub fn to_rgba(t: &Tensor) -> Result<Vec<u8>> {
    let d = t.dims();
    if d.n != 1 || (d.c != 1 && d.c != 3) {
        return Err(Error::InvalidShape(format!("expected [1, 1|3, H, W], got {d}")));
    }
    let byte = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = Vec::with_capacity(d.plane() * 4);
    for y in 0..d.h {
        for x in 0..d.w {
            let rgb = if d.c == 1 {
                [t.at(0, 0, y, x); 3]
            } else {
                [t.at(0, 0, y, x), t.at(0, 1, y, x), t.at(0, 2, y, x)]
            };
            out.extend(rgb.map(byte));
            out.push(255);
        }
    }
    Ok(out)
}
