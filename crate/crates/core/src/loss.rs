//! Forward-only training losses and evaluation metrics.

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::tensor::{spatial_gradient, subsample2, Tensor};

pub const DEFAULT_SMOOTH_L1_BETA: f64 = 1.0;
pub const DEFAULT_HOMOGRAPHY_WEIGHT: f64 = 50.0;
/// Pyramid levels `0..=4` of the depth loss gradient terms.
pub const DEPTH_LOSS_LEVELS: usize = 5;

/// Mean SmoothL1: `0.5·e²/β` for `|e| < β`, else `|e| − 0.5·β`.
pub fn smooth_l1(pred: &Tensor, gt: &Tensor, beta: f64) -> Result<f64> {
    pred.require_dims(gt.dims())?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let e = (p as f64 - g as f64).abs();
            if e < beta {
                0.5 * e * e / beta
            } else {
                e - 0.5 * beta
            }
        })
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Named loss components; serializes as one flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    #[serde(flatten)]
    pub terms: BTreeMap<String, f64>,
    /// Pyramid levels dropped because the map became smaller than 2×2.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_levels: Vec<usize>,
}

/// SmoothL1 on the maps plus SmoothL1 on their forward-difference gradients
/// at 2×2-subsampled pyramid levels 0..=4 (x and y components averaged).
pub fn depth_loss(pred: &Tensor, gt: &Tensor, beta: f64) -> Result<LossBreakdown> {
    pred.require_dims(gt.dims())?;
    let mut terms = BTreeMap::new();
    let base = smooth_l1(pred, gt, beta)?;
    terms.insert("base_smooth_l1".to_string(), base);
    let mut total = base;
    let mut skipped = Vec::new();
    let (mut p, mut g) = (Some(pred.clone()), Some(gt.clone()));
    for level in 0..DEPTH_LOSS_LEVELS {
        if level > 0 {
            p = p.and_then(|t| next_level(&t));
            g = g.and_then(|t| next_level(&t));
        }
        match (&p, &g) {
            (Some(pl), Some(gl)) if pl.dims().h >= 2 && pl.dims().w >= 2 => {
                let (px, py) = spatial_gradient(pl)?;
                let (gx, gy) = spatial_gradient(gl)?;
                let term = 0.5 * (smooth_l1(&gx, &px, beta)? + smooth_l1(&gy, &py, beta)?);
                terms.insert(format!("gradient_l{level}"), term);
                total += term;
            }
            _ => skipped.push(level),
        }
    }
    Ok(LossBreakdown {
        total,
        terms,
        skipped_levels: skipped,
    })
}

fn next_level(t: &Tensor) -> Option<Tensor> {
    subsample2(t).ok()
}

fn weight_pattern(w: f64) -> Matrix3<f64> {
    Matrix3::new(w, w, 1.0, w, w, 1.0, 1.0, 1.0, w)
}

/// `‖weight_w(gt) − weight_w(pred)‖_F`, where `weight_w` scales the upper-left
/// 2×2 block and the bottom-right entry by `w`.
pub fn homography_loss(pred: &Homography, gt: &Homography, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(format!("weight must be > 0, got {w}")));
    }
    let pattern = weight_pattern(w);
    let diff = gt.matrix().component_mul(&pattern) - pred.matrix().component_mul(&pattern);
    Ok(diff.norm())
}

/// Homoscedastic task uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyParams {
    pub sigma_h: f64,
    pub sigma_d: f64,
}

impl UncertaintyParams {
    pub fn new(sigma_h: f64, sigma_d: f64) -> Result<Self> {
        if !(sigma_h > 0.0 && sigma_d > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uncertainties must be > 0, got sigma_h={sigma_h}, sigma_d={sigma_d}"
            )));
        }
        Ok(Self { sigma_h, sigma_d })
    }
}

/// `l_h/(2σ_H²) + l_d/(2σ_D²) + log(σ_H·σ_D)`.
pub fn combined_loss(l_h: f64, l_d: f64, u: &UncertaintyParams) -> Result<f64> {
    UncertaintyParams::new(u.sigma_h, u.sigma_d)?;
    if l_h < 0.0 || l_d < 0.0 {
        return Err(Error::InvalidParameter("losses must be >= 0".into()));
    }
    Ok(l_h / (2.0 * u.sigma_h * u.sigma_h)
        + l_d / (2.0 * u.sigma_d * u.sigma_d)
        + (u.sigma_h * u.sigma_d).ln())
}

/// Depth evaluation metrics.
///
/// `abs_rel` is the signed mean relative error `mean((pred − gt)/gt)`;
/// `abs_rel_abs` is `mean(|pred − gt|/gt)`. `d1` is the fraction of pixels with
/// relative error ≤ 5% (higher is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub abs_rel_abs: f64,
    pub d1: f64,
    pub rmse: f64,
    pub pixel_count: usize,
}

pub fn depth_metrics(pred: &Tensor, gt: &Tensor, mask: Option<&Tensor>) -> Result<MetricsReport> {
    pred.require_dims(gt.dims())?;
    if let Some(m) = mask {
        m.require_dims(gt.dims())?;
    }
    let (mut rel, mut rel_abs, mut inliers, mut sq, mut count) = (0.0, 0.0, 0usize, 0.0, 0usize);
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if mask.is_some_and(|m| m.data()[i] == 0.0) {
            continue;
        }
        let (p, g) = (p as f64, g as f64);
        if !(g > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ground truth must be > 0 on valid pixels, found {g} at index {i}"
            )));
        }
        let e = p - g;
        rel += e / g;
        rel_abs += e.abs() / g;
        if e.abs() / g <= 0.05 {
            inliers += 1;
        }
        sq += e * e;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("no valid pixels to evaluate".into()));
    }
    let n = count as f64;
    Ok(MetricsReport {
        abs_rel: rel / n,
        abs_rel_abs: rel_abs / n,
        d1: inliers as f64 / n,
        rmse: (sq / n).sqrt(),
        pixel_count: count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub base_loss: f64,
    pub trials: usize,
    /// Fraction of perturbed points whose loss is not below the base loss.
    pub fraction_not_lower: f64,
    pub min_perturbed_loss: f64,
}

/// Evaluates `loss` at `point` and at `trials` random perturbations of
/// Euclidean magnitude in `(0, radius]` (uniform direction, uniform magnitude).
pub fn local_optimality_probe<F>(
    loss: F,
    point: &[f64],
    radius: f64,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport>
where
    F: Fn(&[f64]) -> f64,
{
    if !(radius > 0.0) || trials == 0 || point.is_empty() {
        return Err(Error::InvalidParameter(
            "probe needs radius > 0, trials >= 1 and a non-empty point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = loss(point);
    let (mut not_lower, mut min_seen) = (0usize, f64::INFINITY);
    let mut probe = vec![0.0; point.len()];
    for _ in 0..trials {
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = point.iter().map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let norm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        };
        let magnitude = radius * (1.0 - rng.random::<f64>());
        for ((p, &x), &u) in probe.iter_mut().zip(point).zip(&dir) {
            *p = x + magnitude * u;
        }
        let l = loss(&probe);
        min_seen = min_seen.min(l);
        if l >= base {
            not_lower += 1;
        }
    }
    Ok(ProbeReport {
        base_loss: base,
        trials,
        fraction_not_lower: not_lower as f64 / trials as f64,
        min_perturbed_loss: min_seen,
    })
}
