use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use stereo_kit::bench::{bench_sweep, reports_to_csv, reports_to_json, BenchShape, BenchTemplate};
use stereo_kit::check::run_with;
use stereo_kit::encoding::{rescale_encoding, rpe_map, EncodingParams};
use stereo_kit::synth::{demo_on_sample, generate_scene, DemoReport, SceneSpec};
use stereo_kit::viz::{encoding_false_colour, rescale_unit, similarity_maps, MapStats};
use stereo_kit::{CostKind, CostVolumeConfig, Tensor};

use crate::artifacts::{load_png, Artifacts};
use crate::{BenchArgs, CheckArgs, CmdError, CommandResult, DemoArgs, RpeMode, SimmapArgs, SynthArgs};

/// Encoding channels of the false-colour views; low enough that the slowest
/// sinusoids still vary visibly across a small image.
const VIEW_CHANNELS: usize = 8;

fn done(message: String, artifacts: Vec<std::path::PathBuf>) -> Result<CommandResult, CmdError> {
    Ok(CommandResult {
        message,
        artifacts,
        failed: false,
    })
}

#[derive(Serialize)]
struct SimmapJson {
    offset: usize,
    heads: usize,
    width: usize,
    height: usize,
    /// Statistics before rescaling to `[0, 1]`.
    maps: BTreeMap<&'static str, MapStats>,
}

pub fn simmap(a: &SimmapArgs) -> Result<CommandResult, CmdError> {
    let left = load_png(&a.left)?;
    let right = load_png(&a.right)?;
    if left.dims() != right.dims() {
        return Err(CmdError::input(format!(
            "image sizes differ: {}x{} vs {}x{}",
            left.dims().w,
            left.dims().h,
            right.dims().w,
            right.dims().h
        )));
    }
    let maps = similarity_maps(&left, &right, a.offset, a.heads)?;
    let mut files = Artifacts::default();
    let mut stats = BTreeMap::new();
    for kind in CostKind::ALL {
        let m = maps.get(kind);
        stats.insert(kind.as_str(), MapStats::of(m));
        files.png(&format!("{kind}.png"), &rescale_unit(m)?)?;
    }
    files.json(
        "simmap.json",
        &SimmapJson {
            offset: a.offset,
            heads: a.heads,
            width: left.dims().w,
            height: left.dims().h,
            maps: stats,
        },
    )?;
    done(format!("similarity maps at offset {}", a.offset), files.commit(&a.out)?)
}

pub fn bench(a: &BenchArgs) -> Result<CommandResult, CmdError> {
    if a.d.is_empty() {
        return Err(CmdError::input("--d needs at least one value"));
    }
    let grid: Vec<BenchShape> = a
        .d
        .iter()
        .map(|&d| BenchShape::new(a.batch, a.channels, a.height, a.width, d))
        .collect();
    let template = BenchTemplate {
        kinds: a.kinds.clone(),
        heads: a.heads,
        reps: a.reps,
        warmup: a.warmup,
    };
    let reports = bench_sweep(&grid, &template)?;
    let mut table = String::from("operator   d   median_ms   mac_count");
    for r in &reports {
        table.push_str(&format!(
            "\n{:<9} {:>3} {:>11.3} {:>11}",
            r.operator.as_str(),
            r.shape.d,
            r.median_ns as f64 / 1e6,
            r.mac_count
        ));
    }
    let mut files = Artifacts::default();
    files.push(&a.json.to_string_lossy(), reports_to_json(&reports)?.into_bytes());
    files.push(&a.csv.to_string_lossy(), reports_to_csv(&reports)?.into_bytes());
    done(table, files.commit(Path::new(""))?)
}

#[derive(Serialize)]
struct DemoJson {
    scene: SceneSpec,
    max_disparity: usize,
    heads: usize,
    validity_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    without_rpe: Option<DemoReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    with_rpe: Option<DemoReport>,
    /// Mean error with RPE divided by mean error without it.
    #[serde(skip_serializing_if = "Option::is_none")]
    error_ratio: Option<f64>,
}

fn disparity_view(d: &Tensor, max_disparity: usize) -> Result<Tensor, CmdError> {
    let top = (max_disparity.max(2) - 1) as f32;
    Ok(d.map(|v| v / top)?)
}

pub fn demo(a: &DemoArgs) -> Result<CommandResult, CmdError> {
    let spec = a.scene.spec();
    let sample = generate_scene(&spec)?;
    let cfg = CostVolumeConfig::new(a.max_disparity, a.heads)?;
    let run = |rpe: bool| demo_on_sample(&sample, &cfg, rpe);
    let without = match a.rpe {
        RpeMode::Off | RpeMode::Both => Some(run(false)?),
        RpeMode::On => None,
    };
    let with = match a.rpe {
        RpeMode::On | RpeMode::Both => Some(run(true)?),
        RpeMode::Off => None,
    };

    let mut files = Artifacts::default();
    if let Some(o) = &without {
        files.png("disparity_no_rpe.png", &disparity_view(&o.disparity, a.max_disparity)?)?;
    }
    if let Some(o) = &with {
        files.png("disparity_rpe.png", &disparity_view(&o.disparity, a.max_disparity)?)?;
    }
    files.sten("gt_disparity.sten", &sample.gt_disparity);
    files.png("gt_disparity.png", &disparity_view(&sample.gt_disparity, a.max_disparity)?)?;
    files.push("gt_homography.txt", format!("{}\n", sample.gt_homography).into_bytes());
    let p = EncodingParams::new(VIEW_CHANNELS)?;
    let (el, er) = rpe_map(&sample.gt_homography, spec.width, spec.height, &p)?;
    files.png("encoding_left.png", &encoding_false_colour(&rescale_encoding(&el)?)?)?;
    files.png("encoding_right.png", &encoding_false_colour(&rescale_encoding(&er)?)?)?;

    let without = without.map(|o| o.report);
    let with = with.map(|o| o.report);
    let error_ratio = match (&without, &with) {
        (Some(n), Some(r)) if n.mean_abs_error > 0.0 => Some(r.mean_abs_error / n.mean_abs_error),
        _ => None,
    };
    let mut message = String::new();
    for r in without.iter().chain(with.iter()) {
        message.push_str(&format!(
            "{:<8} mean |error| {:.3} px, bad pixels {:.1}%\n",
            if r.use_rpe { "rpe" } else { "no rpe" },
            r.mean_abs_error,
            100.0 * r.bad_pixel_fraction
        ));
    }
    files.json(
        "demo.json",
        &DemoJson {
            scene: spec,
            max_disparity: a.max_disparity,
            heads: a.heads,
            validity_fraction: sample.validity_fraction(),
            without_rpe: without,
            with_rpe: with,
            error_ratio,
        },
    )?;
    done(message.trim_end().to_string(), files.commit(&a.out)?)
}

pub fn synth(a: &SynthArgs) -> Result<CommandResult, CmdError> {
    let spec = a.scene.spec();
    let s = generate_scene(&spec)?;
    let mut files = Artifacts::default();
    files.png("left.png", &s.left)?;
    files.png("right.png", &s.right)?;
    files.sten("gt_disparity.sten", &s.gt_disparity);
    files.push("gt_homography.txt", format!("{}\n", s.gt_homography).into_bytes());
    files.sten("validity.sten", &s.validity);
    files.json("spec.json", &spec)?;
    done(
        format!("{}x{} {} scene, validity {:.3}", spec.width, spec.height, spec.texture, s.validity_fraction()),
        files.commit(&a.out)?,
    )
}

pub fn check(a: &CheckArgs) -> Result<CommandResult, CmdError> {
    let report = run_with(|o| println!("{}", o.line()));
    let passed = report.outcomes.iter().filter(|o| o.passed).count();
    let mut artifacts = Vec::new();
    if let Some(path) = &a.json {
        let mut s = serde_json::to_string_pretty(&report).map_err(|e| CmdError::internal(e.to_string()))?;
        s.push('\n');
        fs::write(path, s).map_err(|e| CmdError::input(format!("cannot write {}: {e}", path.display())))?;
        artifacts.push(path.clone());
    }
    Ok(CommandResult {
        message: format!("{passed}/{} criteria passed in {} ms", report.outcomes.len(), report.total_ms),
        artifacts,
        failed: !report.all_passed(),
    })
}
