//! The acceptance property suite: oracle equivalence, algebraic identities
//! and operator-level measurements, one outcome per criterion.

use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bench::{bench_sweep, speedup, BenchShape, BenchTemplate};
use crate::costvol::{
    cost_volume_lnd, mac_count, multi_head_cost_volume, CostKind, CostVolumeConfig,
};
use crate::encoding::{
    encoding_match_score, pe_map, rescale_encoding, rpe_map, EncodingMap, EncodingParams,
};
use crate::error::Result;
use crate::geometry::{
    fit_homography_dlt, homography_from_params, homography_induced_by_plane, perturb_homography,
    rotation_y, rotation_z, CameraIntrinsics, CameraPose, Correspondence, Homography, Pixel,
};
use crate::loss::{
    combined_loss, depth_loss, depth_metrics, homography_loss, UncertaintyParams,
};
use crate::oracle::{self, MacCounter};
use crate::synth::{end_to_end_demo, generate_scene, SceneSpec};
use crate::tensor::{Dims, GroupConvWeights, LayerNormParams, Tensor, DEFAULT_LAYER_NORM_EPS};

/// Time budget of the whole suite.
pub const SUITE_BUDGET: Duration = Duration::from_secs(300);
pub const ORACLE_BUDGET: Duration = Duration::from_secs(30);
/// Largest `rpe / no-rpe` demo error ratio accepted on the misaligned scene.
pub const DEMO_MAX_RPE_RATIO: f64 = 0.96;
pub const DEMO_SEEDS: u64 = 5;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} ({} ms)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed_ms
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub outcomes: Vec<CriterionOutcome>,
    pub total_ms: u128,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

type Verdict = Result<(bool, String)>;

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> Verdict) -> CriterionOutcome {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_ms: start.elapsed().as_millis(),
    }
}

pub fn criterion(id: u8) -> Option<CriterionOutcome> {
    Some(match id {
        1 => timed(1, "multi-head cost volume matches the loop oracle", oracle_equivalence),
        2 => timed(2, "LND approximates centered cosine", lnd_fidelity),
        3 => timed(3, "MAC counts match the closed forms", mac_algebra),
        4 => timed(4, "multi-head is faster than cosine", latency_direction),
        5 => timed(5, "RPE identity, matching and demo gain", rpe_identity_and_matching),
        6 => timed(6, "homography round trips", homography_round_trips),
        7 => timed(7, "loss and metric identities", loss_identities),
        8 => timed(8, "encoding match degrades with homography noise", noise_sensitivity),
        _ => return None,
    })
}

/// Criteria 1–8 followed by the time budget of the suite (criterion 9).
pub fn run_all() -> CheckReport {
    run_with(|_| {})
}

/// Like [`run_all`], calling `progress` as each outcome becomes available.
pub fn run_with(mut progress: impl FnMut(&CriterionOutcome)) -> CheckReport {
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(9);
    for id in 1..=8 {
        let o = criterion(id).expect("criteria 1-8 exist");
        progress(&o);
        outcomes.push(o);
    }
    let total = start.elapsed();
    let nine = CriterionOutcome {
        id: 9,
        name: "suite finishes within the time budget",
        passed: total < SUITE_BUDGET,
        detail: format!(
            "criteria 1-8 took {:.1} s (budget {} s)",
            total.as_secs_f64(),
            SUITE_BUDGET.as_secs()
        ),
        elapsed_ms: total.as_millis(),
    };
    progress(&nine);
    outcomes.push(nine);
    CheckReport {
        outcomes,
        total_ms: start.elapsed().as_millis(),
    }
}

fn uniform(dims: Dims, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    Tensor::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
}

fn standard_normal(dims: Dims, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    Tensor::from_fn(dims, |_, _, _, _| rng.sample::<f32, _>(StandardNormal))
}

pub fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut with_rpe) = (0.0f32, 0);
    for _ in 0..100 {
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let c = heads * rng.random_range(1..=32 / heads);
        let d = rng.random_range(1..=8);
        let w = rng.random_range(d + 1..=16);
        let h = rng.random_range(1..=16);
        let dims = Dims::new(rng.random_range(1..=2), c, h, w);
        let left = uniform(dims, &mut rng)?;
        let right = uniform(dims, &mut rng)?;
        let weights = (0..d * heads).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = rng
            .random_bool(0.5)
            .then(|| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect());
        let pointwise = GroupConvWeights::new(d, heads, 1, weights, bias)?;
        let cfg = CostVolumeConfig::new(d, heads)?
            .with_dot_scale(rng.random_bool(0.5))
            .with_pointwise(pointwise.clone())?;
        let encodings = if c % 4 == 0 && rng.random_bool(0.5) {
            let p = EncodingParams::new(c)?;
            let shift = Homography::translation(-(rng.random_range(0..=d) as f64), 0.0);
            let (l, r) = rpe_map(&shift, w, h, &p)?;
            Some((rescale_encoding(&l)?, rescale_encoding(&r)?))
        } else {
            None
        };
        let fast = multi_head_cost_volume(
            &left,
            &right,
            &cfg,
            encodings.as_ref().map(|(l, r)| (l, r)),
        )?;
        let slow = oracle::multi_head_cost_volume(
            &left,
            &right,
            d,
            heads,
            cfg.dot_scale,
            cfg.epsilon as f64,
            &pointwise,
            encodings.as_ref().map(|(l, r)| (l.tensor(), r.tensor())),
            &mut MacCounter::default(),
        );
        with_rpe += encodings.is_some() as usize;
        worst = worst.max(fast.values().max_abs_diff(&slow)?);
    }
    let elapsed = start.elapsed();
    Ok((
        worst <= 1e-5 && elapsed < ORACLE_BUDGET,
        format!(
            "100 instances ({with_rpe} with RPE), max |diff| = {worst:.2e} (<= 1e-5), {:.2} s (< 30 s)",
            elapsed.as_secs_f64()
        ),
    ))
}

/// Largest `|LND/C − centered cosine|` over pixels with variance `>= 1e-3`
/// on both sides, plus the pixel count and the smallest variance seen.
fn lnd_gap(
    rng: &mut ChaCha8Rng,
    channels: std::ops::RangeInclusive<usize>,
    epsilon: f32,
    spread_variance: bool,
) -> Result<(f64, usize, f64)> {
    let (mut worst, mut pixels, mut min_var) = (0.0f64, 0usize, f64::INFINITY);
    for _ in 0..25 {
        let c = rng.random_range(channels.clone());
        let dims = Dims::new(1, c, rng.random_range(4..=16), rng.random_range(9..=16));
        let mut draw = || -> Result<Tensor> {
            let t = standard_normal(dims, rng)?;
            if !spread_variance {
                return Ok(t);
            }
            let scales: Vec<f32> = (0..dims.plane()).map(|_| 10f32.powf(rng.random_range(-1.5..0.0))).collect();
            Tensor::from_fn(dims, |_, k, y, x| t.at(0, k, y, x) * scales[y * dims.w + x])
        };
        let (left, right) = (draw()?, draw()?);
        let d = 8;
        let lnd = cost_volume_lnd(&left, &right, d, &LayerNormParams::identity(c, epsilon)?)?;
        for i in 0..d {
            for y in 0..dims.h {
                for x in 0..dims.w {
                    let a: Vec<f64> = (0..c).map(|k| left.at(0, k, y, x) as f64).collect();
                    let xr = (x + dims.w - i) % dims.w;
                    let b: Vec<f64> = (0..c).map(|k| right.at(0, k, y, xr) as f64).collect();
                    let (va, vb) = (oracle::variance(&a), oracle::variance(&b));
                    if va < 1e-3 || vb < 1e-3 {
                        continue;
                    }
                    min_var = min_var.min(va).min(vb);
                    let approx = lnd.values().at(0, i, y, x) as f64 / c as f64;
                    worst = worst.max((approx - oracle::centered_cosine(&a, &b)).abs());
                    pixels += 1;
                }
            }
        }
    }
    Ok((worst, pixels, min_var))
}

/// 25 standard-normal tensors at the default epsilon with `C` in 16..=32, and
/// 25 tensors whose per-pixel variance spans `[1e-3, 1]` at `ε = 1e-9`; the
/// gap grows like `ε/var`, so the default epsilon cannot meet 1e-4 near var = 1e-3.
pub fn lnd_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (typical, typical_px, typical_var) = lnd_gap(&mut rng, 16..=32, DEFAULT_LAYER_NORM_EPS, false)?;
    let (spread, spread_px, spread_var) = lnd_gap(&mut rng, 4..=32, 1e-9, true)?;
    let mut mh_worst = 0.0f32;
    for _ in 0..10 {
        let dims = Dims::new(2, rng.random_range(2..=32), 8, 12);
        let left = standard_normal(dims, &mut rng)?;
        let right = standard_normal(dims, &mut rng)?;
        let cfg = CostVolumeConfig::new(6, 1)?
            .with_dot_scale(false)
            .with_pointwise(GroupConvWeights::shared(6, 1, 1, &[1.0])?)?;
        let mh = multi_head_cost_volume(&left, &right, &cfg, None)?;
        let lnd = cost_volume_lnd(&left, &right, 6, &LayerNormParams::identity(dims.c, cfg.epsilon)?)?;
        mh_worst = mh_worst.max(mh.values().max_abs_diff(lnd.values())?);
    }
    Ok((
        typical <= 1e-4 && spread <= 1e-4 && mh_worst <= 1e-5,
        format!(
            "max |LND/C - centered cosine| = {typical:.2e} at eps=1e-5 ({typical_px} pixels, min var {typical_var:.3}) \
             and {spread:.2e} at eps=1e-9 ({spread_px} pixels, min var {spread_var:.1e}) (<= 1e-4); \
             heads=1 multi-head vs LND max |diff| = {mh_worst:.2e} (<= 1e-5)"
        ),
    ))
}

pub fn mac_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = Vec::new();
    let mut cases = 0;
    for &c in &[2usize, 4, 8] {
        for &h in &[1usize, 3, 5] {
            for &w in &[2usize, 4, 7] {
                for &d in &[2usize, 4, 8, 16] {
                    let dims = Dims::new(1, c, h, w);
                    let left = uniform(dims, &mut rng)?;
                    let right = uniform(dims, &mut rng)?;
                    let mut cos = MacCounter::default();
                    oracle::cosine_cost_volume(&left, &right, d, &mut cos);
                    let mut mh = MacCounter::default();
                    let heads = 2;
                    let pw = GroupConvWeights::shared(d, heads, 1, &[0.5, 0.5])?;
                    oracle::multi_head_cost_volume(
                        &left, &right, d, heads, true, 1e-5, &pw, None, &mut mh,
                    );
                    let want_cos = mac_count(CostKind::Cosine, c, h, w, d, 1).multiply_accumulates;
                    let want_mh = mac_count(CostKind::MultiHead, c, h, w, d, heads).multiply_accumulates;
                    if cos.count != want_cos || mh.count != want_mh {
                        mismatches.push(format!("C={c} H={h} W={w} d={d}"));
                    }
                    if (mh.count < cos.count) != (d > 3) {
                        mismatches.push(format!("ordering at C={c} H={h} W={w} d={d}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    let crossover_ok = (1..=64).all(|d| {
        let cos = mac_count(CostKind::Cosine, 3, 3, 3, d, 1).multiply_accumulates;
        let mh = mac_count(CostKind::MultiHead, 3, 3, 3, d, 1).multiply_accumulates;
        (mh < cos) == (d > 3)
    });
    Ok((
        mismatches.is_empty() && crossover_ok,
        if mismatches.is_empty() {
            format!("{cases} instrumented cases match 3CHWd and 6CHW+CHWd; multihead < cosine exactly for d > 3")
        } else {
            format!("mismatches: {}", mismatches.join(", "))
        },
    ))
}

pub fn latency_direction() -> Verdict {
    let shape = BenchShape::new(1, 32, 64, 64, 16);
    let template = BenchTemplate {
        kinds: vec![CostKind::Cosine, CostKind::MultiHead],
        heads: 4,
        reps: 20,
        warmup: 2,
    };
    let r = bench_sweep(&[shape], &template)?;
    let (cos, mh) = (&r[0], &r[1]);
    Ok((
        mh.median_ns < cos.median_ns,
        format!(
            "median cosine {:.3} ms, multihead {:.3} ms, speedup x{:.2} over 20 reps on {} threads (operator-level)",
            cos.median_ns as f64 / 1e6,
            mh.median_ns as f64 / 1e6,
            speedup(cos, mh),
            mh.threads
        ),
    ))
}

pub fn rpe_identity_and_matching() -> Verdict {
    let p = EncodingParams::new(8)?;
    let (l, r) = rpe_map(&Homography::identity(), 64, 64, &p)?;
    let identical = l == r;

    let shift = Homography::translation(-10.0, 0.0);
    let (l, rpe) = rpe_map(&shift, 64, 64, &p)?;
    let plain = pe_map(64, 64, &p)?;
    let with = encoding_match_score(&l, &rpe, &shift)?;
    let without = encoding_match_score(&l, &plain, &shift)?;

    let cfg = CostVolumeConfig::new(16, 4)?;
    let (mut ratio, mut every_seed) = (0.0, true);
    let (mut e_plain, mut e_rpe) = (0.0, 0.0);
    for seed in 0..DEMO_SEEDS {
        let spec = SceneSpec::default().with_seed(seed);
        let a = end_to_end_demo(&spec, &cfg, false)?.report.mean_abs_error;
        let b = end_to_end_demo(&spec, &cfg, true)?.report.mean_abs_error;
        every_seed &= b < a;
        ratio += b / a / DEMO_SEEDS as f64;
        e_plain += a / DEMO_SEEDS as f64;
        e_rpe += b / DEMO_SEEDS as f64;
    }
    let rect = SceneSpec::rectified();
    let rect_gap = (end_to_end_demo(&rect, &cfg, true)?.report.mean_abs_error
        - end_to_end_demo(&rect, &cfg, false)?.report.mean_abs_error)
        .abs();
    let ident = SceneSpec::identity();
    let ident_err = end_to_end_demo(&ident, &cfg, true)?
        .report
        .mean_abs_error
        .max(end_to_end_demo(&ident, &cfg, false)?.report.mean_abs_error);

    let passed = identical
        && with.score > without.score
        && every_seed
        && ratio <= DEMO_MAX_RPE_RATIO
        && rect_gap <= 0.01
        && ident_err <= 0.01;
    Ok((
        passed,
        format!(
            "H=I maps identical: {identical}; match score RPE {:.3} vs PE {:.3} (chance {:.3}); \
             demo error misaligned {e_plain:.3} -> {e_rpe:.3} px with RPE (ratio {ratio:.3} <= {DEMO_MAX_RPE_RATIO}, \
             better on every seed: {every_seed}); rectified gap {rect_gap:.4}; identity max {ident_err:.4}",
            with.score, without.score, with.chance
        ),
    ))
}

fn random_intrinsics(rng: &mut ChaCha8Rng) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(
        rng.random_range(200.0..800.0),
        rng.random_range(200.0..800.0),
        rng.random_range(100.0..400.0),
        rng.random_range(100.0..300.0),
    )
}

pub fn homography_round_trips() -> Verdict {
    let i = Matrix3::identity();
    let (ik, im) = (CameraIntrinsics::identity(), CameraPose::identity());
    let n = Vector3::new(0.0, 0.0, 1.0);
    let exact = *Homography::identity().matrix() == i
        && *homography_from_params(&ik, &im, &ik, &im)?.matrix() == i
        && *homography_induced_by_plane(&ik, &ik, &i, &Vector3::zeros(), &n, 5.0)?.matrix() == i;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut dlt_worst = 0.0f64;
    for trial in 0..100 {
        let h = Homography::new(Matrix3::new(
            1.0 + rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-20.0..20.0),
            rng.random_range(-0.2..0.2),
            1.0 + rng.random_range(-0.2..0.2),
            rng.random_range(-20.0..20.0),
            rng.random_range(-1e-3..1e-3),
            rng.random_range(-1e-3..1e-3),
            1.0,
        ))?;
        let count = 4 + trial % 9;
        let cs = (0..count)
            .map(|k| {
                let q = if k < 4 {
                    let (x, y) = [(0.0, 0.0), (320.0, 0.0), (320.0, 240.0), (0.0, 240.0)][k];
                    Pixel::new(x + rng.random_range(-20.0..20.0), y + rng.random_range(-20.0..20.0))
                } else {
                    Pixel::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0))
                };
                let m = h.matrix() * Vector3::new(q.x, q.y, 1.0);
                Correspondence {
                    left: q,
                    right: Pixel::new(m.x / m.z, m.y / m.z),
                }
            })
            .collect::<Vec<_>>();
        dlt_worst = dlt_worst.max(fit_homography_dlt(&cs)?.relative_frobenius(&h));
    }

    let mut plane_worst = 0.0f64;
    for _ in 0..100 {
        let (kl, kr) = (random_intrinsics(&mut rng)?, random_intrinsics(&mut rng)?);
        let r = rotation_y(rng.random_range(-0.3..0.3)) * rotation_z(rng.random_range(-0.3..0.3));
        let nv = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0).normalize();
        let got = homography_induced_by_plane(&kl, &kr, &r, &Vector3::zeros(), &nv, rng.random_range(1.0..50.0))?;
        let kl_inv = kl.matrix().try_inverse().expect("valid intrinsics");
        let want = Homography::new(kr.matrix() * r * kl_inv)?;
        plane_worst = plane_worst.max((got.matrix() - want.matrix()).abs().max());
    }
    Ok((
        exact && dlt_worst <= 1e-6 && plane_worst <= 1e-9,
        format!(
            "identity constructions exact: {exact}; DLT max relative Frobenius error {dlt_worst:.2e} (<= 1e-6) \
             over 100 fits; plane-induced t=0 vs rotation form max |diff| {plane_worst:.2e} (<= 1e-9)"
        ),
    ))
}

pub fn loss_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = Dims::new(1, 1, 32, 32);
    let gt = Tensor::from_fn(dims, |_, _, _, _| rng.random_range(1.0..20.0))?;
    let depth_zero = depth_loss(&gt, &gt, 1.0)?.total == 0.0;

    let h = Homography::new(Matrix3::new(1.01, 0.02, 3.0, -0.01, 0.99, -2.0, 1e-4, 2e-4, 1.0))?;
    let h_zero = homography_loss(&h, &h, 50.0)? == 0.0;

    let (lh, ld) = (0.731, 1.947);
    let combined = combined_loss(lh, ld, &UncertaintyParams::new(1.0, 1.0)?)?;
    let combined_ok = combined == (lh + ld) / 2.0;

    let delta = 1e-3;
    let bump = |r: usize, c: usize| -> Result<f64> {
        let mut m = *h.matrix();
        m[(r, c)] += delta;
        homography_loss(&Homography::new(m)?, &h, 50.0)
    };
    let ratio = bump(0, 0)? / bump(0, 2)?;
    let ratio_ok = (ratio - 50.0).abs() <= 1e-6;

    let d1_in = depth_metrics(&gt.map(|v| v * 1.04)?, &gt, None)?.d1;
    let d1_out = depth_metrics(&gt.map(|v| v * 1.10)?, &gt, None)?.d1;
    Ok((
        depth_zero && h_zero && combined_ok && ratio_ok && d1_in == 1.0 && d1_out == 0.0,
        format!(
            "depth loss zero: {depth_zero}; homography loss zero: {h_zero}; sigma=1 combination = (L_H+L_D)/2: {combined_ok}; \
             (1,1)/(1,3) perturbation ratio {ratio:.9} (= 50); D1 at 1.04 gt {d1_in}, at 1.10 gt {d1_out}"
        ),
    ))
}

pub fn noise_sensitivity() -> Verdict {
    let sample = generate_scene(&SceneSpec::default())?;
    let h = sample.gt_homography;
    let dims = sample.gt_disparity.dims();
    let identity = (0..5).all(|seed| perturb_homography(&h, 0.0, seed).map(|p| p == h).unwrap_or(false));

    let p = EncodingParams::new(8)?;
    let left = pe_map(dims.w, dims.h, &p)?;
    let score = |estimate: &Homography| -> Result<f64> {
        let right: EncodingMap = match rpe_map(estimate, dims.w, dims.h, &p) {
            Ok((_, r)) => r,
            Err(e) if e.is_contract_violation() => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok(encoding_match_score(&left, &right, &h)?.score)
    };
    let sigmas = [0.0, 0.01, 0.05, 0.1];
    let mut means = Vec::with_capacity(sigmas.len());
    for &sigma in &sigmas {
        let mut total = 0.0;
        for seed in 0..5 {
            let noisy = match perturb_homography(&h, sigma, seed) {
                Ok(n) => n,
                Err(e) if e.is_contract_violation() => continue,
                Err(e) => return Err(e),
            };
            total += score(&noisy)?;
        }
        means.push(total / 5.0);
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        identity && monotone,
        format!(
            "sigma=0 perturbation is identity: {identity}; mean match score over 5 seeds {} for sigma {:?}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" >= "),
            sigmas
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_criterion_is_none() {
        assert!(criterion(0).is_none());
        assert!(criterion(10).is_none());
    }

    #[test]
    fn outcome_line_names_the_verdict() {
        let o = timed(3, "demo", || Ok((true, "fine".into())));
        assert!(o.line().starts_with("criterion 3 [PASS] demo: fine"));
        let o = timed(4, "demo", || Err(crate::Error::Empty("nothing".into())));
        assert!(!o.passed && o.detail.contains("nothing"));
    }
}
