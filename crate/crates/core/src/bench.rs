//! Wall-clock microbenchmarks of the cost-volume operators.
//!
//! Inputs are drawn once per shape from a fixed seed and shared by every
//! operator kind. Only the operator call is timed; it still allocates its own
//! output volume, which is part of each operator's contract.

use std::hint::black_box;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costvol::{
    cost_volume_cosine, cost_volume_lnd, mac_count, multi_head_cost_volume, CostKind,
    CostVolumeConfig,
};
use crate::error::{Error, Result};
use crate::parallel::current_threads;
use crate::tensor::{Dims, LayerNormParams, Tensor};

pub const INPUT_SEED: u64 = 0x5eed;
pub const MIN_REPS: usize = 3;
pub const MIN_WARMUP: usize = 1;

/// Feature extents plus the disparity range of one benchmark case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchShape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
}

impl BenchShape {
    pub fn new(n: usize, c: usize, h: usize, w: usize, d: usize) -> Self {
        Self { n, c, h, w, d }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.n, self.c, self.h, self.w)
    }
}

/// Settings shared by every case of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTemplate {
    pub kinds: Vec<CostKind>,
    pub heads: usize,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for BenchTemplate {
    fn default() -> Self {
        Self {
            kinds: CostKind::ALL.to_vec(),
            heads: 4,
            reps: 20,
            warmup: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub operator: CostKind,
    pub shape: BenchShape,
    pub heads: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub samples_ns: Vec<u64>,
    pub median_ns: u64,
    pub mean_ns: u64,
    pub min_ns: u64,
    pub mac_count: u64,
    pub threads: usize,
    /// Seconds since the Unix epoch when the run finished.
    pub timestamp: u64,
}

/// Seeded uniform `[-1, 1)` inputs for a shape.
pub fn bench_inputs(shape: &BenchShape) -> Result<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(INPUT_SEED);
    let dims = shape.dims();
    let left = Tensor::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))?;
    let right = Tensor::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))?;
    Ok((left, right))
}

pub fn bench_operator(
    kind: CostKind,
    shape: &BenchShape,
    heads: usize,
    reps: usize,
    warmup: usize,
) -> Result<BenchReport> {
    let (left, right) = bench_inputs(shape)?;
    bench_on_inputs(kind, shape, heads, reps, warmup, &left, &right)
}

fn bench_on_inputs(
    kind: CostKind,
    shape: &BenchShape,
    heads: usize,
    reps: usize,
    warmup: usize,
    left: &Tensor,
    right: &Tensor,
) -> Result<BenchReport> {
    if reps < MIN_REPS {
        return Err(Error::InvalidParameter(format!("reps must be >= {MIN_REPS}, got {reps}")));
    }
    if warmup < MIN_WARMUP {
        return Err(Error::InvalidParameter(format!(
            "warmup must be >= {MIN_WARMUP}, got {warmup}"
        )));
    }
    let cfg = CostVolumeConfig::new(shape.d, heads)?;
    cfg.validate_for(shape.dims())?;
    let ln = LayerNormParams::identity(shape.c, cfg.epsilon)?;
    let run = || -> Result<()> {
        let cv = match kind {
            CostKind::Cosine => cost_volume_cosine(left, right, shape.d)?,
            CostKind::Lnd => cost_volume_lnd(left, right, shape.d, &ln)?,
            CostKind::MultiHead => multi_head_cost_volume(left, right, &cfg, None)?,
        };
        black_box(cv);
        Ok(())
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut samples_ns = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        run()?;
        samples_ns.push(start.elapsed().as_nanos() as u64);
    }
    let mut sorted = samples_ns.clone();
    sorted.sort_unstable();
    let median_ns = if reps % 2 == 1 {
        sorted[reps / 2]
    } else {
        (sorted[reps / 2 - 1] + sorted[reps / 2]) / 2
    };
    let mean_ns = (samples_ns.iter().map(|&s| s as u128).sum::<u128>() / reps as u128) as u64;
    Ok(BenchReport {
        operator: kind,
        shape: *shape,
        heads,
        repetitions: reps,
        warmup,
        min_ns: sorted[0],
        median_ns,
        mean_ns,
        samples_ns,
        mac_count: mac_count(kind, shape.c, shape.h, shape.w, shape.d, heads).multiply_accumulates,
        threads: current_threads(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// One report per (shape, kind), shapes outermost.
pub fn bench_sweep(grid: &[BenchShape], template: &BenchTemplate) -> Result<Vec<BenchReport>> {
    if grid.is_empty() {
        return Err(Error::Empty("benchmark grid has no shapes".into()));
    }
    if template.kinds.is_empty() {
        return Err(Error::Empty("benchmark template has no operator kinds".into()));
    }
    let mut out = Vec::with_capacity(grid.len() * template.kinds.len());
    for shape in grid {
        let (left, right) = bench_inputs(shape)?;
        for &kind in &template.kinds {
            out.push(bench_on_inputs(
                kind,
                shape,
                template.heads,
                template.reps,
                template.warmup,
                &left,
                &right,
            )?);
        }
    }
    Ok(out)
}

/// Pretty JSON array of reports.
pub fn reports_to_json(reports: &[BenchReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Serialize)]
struct CsvRow {
    operator: CostKind,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    d: usize,
    heads: usize,
    repetitions: usize,
    warmup: usize,
    median_ns: u64,
    mean_ns: u64,
    min_ns: u64,
    mac_count: u64,
    threads: usize,
    timestamp: u64,
}

/// One CSV row per report (samples omitted).
pub fn reports_to_csv(reports: &[BenchReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            operator: r.operator,
            n: r.shape.n,
            c: r.shape.c,
            h: r.shape.h,
            w: r.shape.w,
            d: r.shape.d,
            heads: r.heads,
            repetitions: r.repetitions,
            warmup: r.warmup,
            median_ns: r.median_ns,
            mean_ns: r.mean_ns,
            min_ns: r.min_ns,
            mac_count: r.mac_count,
            threads: r.threads,
            timestamp: r.timestamp,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Median-time ratio `cosine / multihead` for reports of the same shape.
pub fn speedup(cosine: &BenchReport, multihead: &BenchReport) -> f64 {
    cosine.median_ns as f64 / multihead.median_ns.max(1) as f64
}
