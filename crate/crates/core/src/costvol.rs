//! Cost volumes: the cosine baseline, the layer-norm + dot-product
//! approximation (LND), and the multi-head variant built from memory moves and
//! one grouped pointwise convolution.
//!
//! All three produce `[N, max_disparity, H, W]`. Slice `i` compares the left
//! pixel at column `w` with the right pixel at column `(w - i) mod W`, i.e. the
//! right features rolled right by `i` columns. Columns `w < i` therefore hold
//! wrapped-around comparisons; they are kept, and [`CostVolume::wrap_mask`]
//! marks them for consumers that want to ignore them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingMap, RangeTag};
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk;
use crate::tensor::{
    group_pointwise_conv, layer_norm_channel, sten, Dims, GroupConvWeights, LayerNormParams,
    Tensor, DEFAULT_LAYER_NORM_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Cosine,
    Lnd,
    #[serde(rename = "multihead")]
    MultiHead,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::Cosine, CostKind::Lnd, CostKind::MultiHead];

    pub fn as_str(&self) -> &'static str {
        match self {
            CostKind::Cosine => "cosine",
            CostKind::Lnd => "lnd",
            CostKind::MultiHead => "multihead",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(CostKind::Cosine),
            "lnd" => Ok(CostKind::Lnd),
            "multihead" | "multi-head" => Ok(CostKind::MultiHead),
            other => Err(Error::InvalidParameter(format!(
                "unknown cost volume kind '{other}' (expected cosine, lnd or multihead)"
            ))),
        }
    }
}

/// Settings of the multi-head cost volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVolumeConfig {
    pub max_disparity: usize,
    pub head_num: usize,
    /// Multiply each head similarity by `1/sqrt(C/head_num)`.
    pub dot_scale: bool,
    pub epsilon: f32,
    /// Fuses the head similarities of each disparity: `groups = max_disparity`,
    /// `in_per_group = head_num`, `out_per_group = 1`.
    pub pointwise: GroupConvWeights,
}

impl CostVolumeConfig {
    /// Untrained defaults: dot scale on, `ε = 1e-5`, pointwise weights `1/head_num`, no bias.
    pub fn new(max_disparity: usize, head_num: usize) -> Result<Self> {
        if max_disparity == 0 {
            return Err(Error::InvalidParameter("max_disparity must be >= 1".into()));
        }
        if head_num == 0 {
            return Err(Error::InvalidParameter("head_num must be >= 1".into()));
        }
        let pointwise = GroupConvWeights::shared(
            max_disparity,
            head_num,
            1,
            &vec![1.0 / head_num as f32; head_num],
        )?;
        Ok(Self {
            max_disparity,
            head_num,
            dot_scale: true,
            epsilon: DEFAULT_LAYER_NORM_EPS,
            pointwise,
        })
    }

    pub fn with_dot_scale(mut self, on: bool) -> Self {
        self.dot_scale = on;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_pointwise(mut self, pointwise: GroupConvWeights) -> Result<Self> {
        if pointwise.groups != self.max_disparity
            || pointwise.in_per_group != self.head_num
            || pointwise.out_per_group != 1
        {
            return Err(Error::InvalidParameter(format!(
                "pointwise weights must have groups={}, in_per_group={}, out_per_group=1",
                self.max_disparity, self.head_num
            )));
        }
        self.pointwise = pointwise;
        Ok(self)
    }

    /// Checks the config against `[N, C, H, W]` features.
    pub fn validate_for(&self, dims: Dims) -> Result<()> {
        if dims.c % self.head_num != 0 {
            return Err(Error::InvalidParameter(format!(
                "head_num {} does not divide C = {}",
                self.head_num, dims.c
            )));
        }
        check_disparity(self.max_disparity, dims)
    }

    fn layer_norm(&self, channels: usize) -> Result<LayerNormParams> {
        LayerNormParams::identity(channels, self.epsilon)
    }
}

fn check_disparity(d: usize, dims: Dims) -> Result<()> {
    if d == 0 || d >= dims.w {
        return Err(Error::InvalidParameter(format!(
            "max_disparity must satisfy 1 <= d < W = {}, got {d}",
            dims.w
        )));
    }
    Ok(())
}

fn check_pair(left: &Tensor, right: &Tensor, d: usize) -> Result<()> {
    right.require_dims(left.dims())?;
    check_disparity(d, left.dims())
}

/// A `[N, d, H, W]` similarity volume and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    values: Tensor,
    kind: CostKind,
    heads: usize,
    dot_scale: bool,
}

impl CostVolume {
    pub fn new(values: Tensor, kind: CostKind, heads: usize, dot_scale: bool) -> Result<Self> {
        if heads == 0 {
            return Err(Error::InvalidParameter("heads must be >= 1".into()));
        }
        if kind == CostKind::Cosine {
            if let Some(v) = values.data().iter().find(|v| v.abs() > 1.0 + 1e-6) {
                return Err(Error::InvalidParameter(format!(
                    "cosine cost volume value {v} outside [-1, 1]"
                )));
            }
        }
        Ok(Self { values, kind, heads, dot_scale })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn max_disparity(&self) -> usize {
        self.values.dims().c
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn dot_scale(&self) -> bool {
        self.dot_scale
    }

    /// One disparity slice as `[N, 1, H, W]`.
    pub fn slice(&self, disparity: usize) -> Result<Tensor> {
        self.values.channel_slice(disparity, disparity + 1)
    }

    /// `[1, d, H, W]` mask: 0 where column `w < i` (the wrapped strip), 1 elsewhere.
    pub fn wrap_mask(&self) -> Tensor {
        let d = self.values.dims();
        Tensor::from_fn(Dims::new(1, d.c, d.h, d.w), |_, i, _, w| if w < i { 0.0 } else { 1.0 })
            .expect("mask dims are valid")
    }

    pub fn metadata(&self) -> CostVolumeMeta {
        CostVolumeMeta {
            kind: self.kind,
            d: self.max_disparity(),
            heads: self.heads,
            dot_scale: self.dot_scale,
        }
    }

    /// Writes `path` as STEN and `path` + `.meta` as the key=value sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        sten::save(&self.values, path)?;
        std::fs::write(sidecar_path(path), self.metadata().to_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let values = sten::load(path)?;
        let meta: CostVolumeMeta = std::fs::read_to_string(sidecar_path(path))?.parse()?;
        if meta.d != values.dims().c {
            return Err(Error::Format(format!(
                "sidecar says d={}, tensor has {} channels",
                meta.d,
                values.dims().c
            )));
        }
        Self::new(values, meta.kind, meta.heads, meta.dot_scale)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

/// Sidecar record stored next to a serialized cost volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostVolumeMeta {
    pub kind: CostKind,
    pub d: usize,
    pub heads: usize,
    pub dot_scale: bool,
}

impl fmt::Display for CostVolumeMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind={}", self.kind)?;
        writeln!(f, "d={}", self.d)?;
        writeln!(f, "heads={}", self.heads)?;
        writeln!(f, "dot_scale={}", self.dot_scale)
    }
}

impl FromStr for CostVolumeMeta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut kind, mut d, mut heads, mut dot_scale) = (None, None, None, None);
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad metadata line '{line}'")))?;
            let bad = |_| Error::Format(format!("bad value for {k}: '{v}'"));
            match k.trim() {
                "kind" => kind = Some(v.parse()?),
                "d" => d = Some(v.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
                "heads" => {
                    heads = Some(v.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?)
                }
                "dot_scale" => {
                    dot_scale = Some(v.trim().parse().map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?)
                }
                _ => {}
            }
        }
        let missing = |k: &str| Error::Format(format!("metadata missing '{k}'"));
        Ok(Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            d: d.ok_or_else(|| missing("d"))?,
            heads: heads.ok_or_else(|| missing("heads"))?,
            dot_scale: dot_scale.ok_or_else(|| missing("dot_scale"))?,
        })
    }
}

/// `acc[y, x] += l[y, x] * r[y, (x - shift) mod W]` for one pair of planes.
#[inline]
fn accumulate_shifted_product(acc: &mut [f64], l: &[f32], r: &[f32], width: usize, shift: usize) {
    for ((a, lr), rr) in acc
        .chunks_exact_mut(width)
        .zip(l.chunks_exact(width))
        .zip(r.chunks_exact(width))
    {
        let (a_wrap, a_main) = a.split_at_mut(shift);
        let (l_wrap, l_main) = lr.split_at(shift);
        let (r_main, r_wrap) = rr.split_at(width - shift);
        for ((a, &x), &y) in a_main.iter_mut().zip(l_main).zip(r_main) {
            *a += x as f64 * y as f64;
        }
        for ((a, &x), &y) in a_wrap.iter_mut().zip(l_wrap).zip(r_wrap) {
            *a += x as f64 * y as f64;
        }
    }
}

/// `acc[y, x] += r[y, (x - shift) mod W]^2`.
#[inline]
fn accumulate_shifted_square(acc: &mut [f64], r: &[f32], width: usize, shift: usize) {
    for (a, rr) in acc.chunks_exact_mut(width).zip(r.chunks_exact(width)) {
        let (a_wrap, a_main) = a.split_at_mut(shift);
        let (r_main, r_wrap) = rr.split_at(width - shift);
        for (a, &y) in a_main.iter_mut().zip(r_main).chain(a_wrap.iter_mut().zip(r_wrap)) {
            *a += y as f64 * y as f64;
        }
    }
}

/// Sum of shifted products over the channel range `[c0, c1)` of batch item `n`.
fn shifted_dot_plane(
    acc: &mut [f64],
    left: &Tensor,
    right: &Tensor,
    n: usize,
    channels: std::ops::Range<usize>,
    shift: usize,
) {
    let w = left.dims().w;
    for c in channels {
        accumulate_shifted_product(acc, left.plane(n, c), right.plane(n, c), w, shift);
    }
}

/// Cosine similarity of every left pixel vector with the rolled right pixel
/// vector, for roll offsets `0..d`. Norms are evaluated per pixel and per
/// disparity; zero-norm pairs score 0.
pub fn cost_volume_cosine(left: &Tensor, right: &Tensor, d: usize) -> Result<CostVolume> {
    check_pair(left, right, d)?;
    let dims = left.dims();
    let out_dims = Dims::new(dims.n, d, dims.h, dims.w);
    let plane = dims.plane();
    let mut out = vec![0.0f32; out_dims.len()];
    for_each_chunk(&mut out, plane, |idx, dst| {
        let (n, i) = (idx / d, idx % d);
        let mut dot = vec![0.0f64; plane];
        let mut ll = vec![0.0f64; plane];
        let mut rr = vec![0.0f64; plane];
        for c in 0..dims.c {
            let (l, r) = (left.plane(n, c), right.plane(n, c));
            accumulate_shifted_product(&mut dot, l, r, dims.w, i);
            accumulate_shifted_product(&mut ll, l, l, dims.w, 0);
            accumulate_shifted_square(&mut rr, r, dims.w, i);
        }
        for (o, ((&num, &a), &b)) in dst.iter_mut().zip(dot.iter().zip(&ll).zip(&rr)) {
            let den = (a * b).sqrt();
            *o = if den > 0.0 { (num / den) as f32 } else { 0.0 };
        }
    });
    CostVolume::new(Tensor::new(out_dims, out)?, CostKind::Cosine, 1, false)
}

/// Layer-normalizes both inputs once, then takes plain dot products at every roll offset.
pub fn cost_volume_lnd(
    left: &Tensor,
    right: &Tensor,
    d: usize,
    p: &LayerNormParams,
) -> Result<CostVolume> {
    check_pair(left, right, d)?;
    let ln_l = layer_norm_channel(left, p)?;
    let ln_r = layer_norm_channel(right, p)?;
    let dims = left.dims();
    let out_dims = Dims::new(dims.n, d, dims.h, dims.w);
    let plane = dims.plane();
    let mut out = vec![0.0f32; out_dims.len()];
    for_each_chunk(&mut out, plane, |idx, dst| {
        let (n, i) = (idx / d, idx % d);
        let mut acc = vec![0.0f64; plane];
        shifted_dot_plane(&mut acc, &ln_l, &ln_r, n, 0..dims.c, i);
        for (o, a) in dst.iter_mut().zip(acc) {
            *o = a as f32;
        }
    });
    CostVolume::new(Tensor::new(out_dims, out)?, CostKind::Lnd, 1, false)
}

/// Multi-head cost volume.
///
/// Both inputs are layer-normalized; when `rpe` is given, the (rescaled)
/// left/right encoding maps are added to the normalized features. Per-head dot
/// products for every disparity are laid out as a `[N, d·heads, H, W]` tensor
/// and fused by one grouped pointwise convolution with `d` groups.
pub fn multi_head_cost_volume(
    left: &Tensor,
    right: &Tensor,
    cfg: &CostVolumeConfig,
    rpe: Option<(&EncodingMap, &EncodingMap)>,
) -> Result<CostVolume> {
    right.require_dims(left.dims())?;
    cfg.validate_for(left.dims())?;
    let p = cfg.layer_norm(left.dims().c)?;
    let mut ln_l = layer_norm_channel(left, &p)?;
    let mut ln_r = layer_norm_channel(right, &p)?;
    if let Some((el, er)) = rpe {
        ln_l = inject_encoding(&ln_l, el)?;
        ln_r = inject_encoding(&ln_r, er)?;
    }
    multi_head_cost_volume_normalized(&ln_l, &ln_r, cfg)
}

/// Disparity loop of the multi-head cost volume on already-normalized features.
pub fn multi_head_cost_volume_normalized(
    left_norm: &Tensor,
    right_norm: &Tensor,
    cfg: &CostVolumeConfig,
) -> Result<CostVolume> {
    right_norm.require_dims(left_norm.dims())?;
    cfg.validate_for(left_norm.dims())?;
    let dims = left_norm.dims();
    let (d, heads) = (cfg.max_disparity, cfg.head_num);
    let stride = dims.c / heads;
    let scale = if cfg.dot_scale { 1.0 / (stride as f64).sqrt() } else { 1.0 };
    let sim_dims = Dims::new(dims.n, d * heads, dims.h, dims.w);
    let plane = dims.plane();
    let mut sim = vec![0.0f32; sim_dims.len()];
    for_each_chunk(&mut sim, plane, |idx, dst| {
        let n = idx / (d * heads);
        let (i, h) = ((idx % (d * heads)) / heads, idx % heads);
        let mut acc = vec![0.0f64; plane];
        shifted_dot_plane(&mut acc, left_norm, right_norm, n, h * stride..(h + 1) * stride, i);
        for (o, a) in dst.iter_mut().zip(acc) {
            *o = (a * scale) as f32;
        }
    });
    let sim = Tensor::new(sim_dims, sim)?;
    let values = group_pointwise_conv(&sim, &cfg.pointwise)?;
    CostVolume::new(values, CostKind::MultiHead, heads, cfg.dot_scale)
}

/// Adds a rescaled encoding map (batch extent 1 or N) to normalized features.
pub fn inject_encoding(features: &Tensor, enc: &EncodingMap) -> Result<Tensor> {
    if enc.range() != RangeTag::Rescaled {
        return Err(Error::Precondition(
            "positional encodings must be rescaled to [0, 1] before injection".into(),
        ));
    }
    let fd = features.dims();
    let ed = enc.tensor().dims();
    if ed.c != fd.c || ed.h != fd.h || ed.w != fd.w || (ed.n != 1 && ed.n != fd.n) {
        return Err(Error::ShapeMismatch {
            expected: fd.to_vec(),
            found: ed.to_vec(),
        });
    }
    let per_item = fd.c * fd.plane();
    let e = enc.tensor().data();
    let data = features
        .data()
        .chunks_exact(per_item)
        .enumerate()
        .flat_map(|(n, item)| {
            let off = if ed.n == 1 { 0 } else { n * per_item };
            item.iter()
                .zip(&e[off..off + per_item])
                .map(|(a, b)| a + b)
        })
        .collect();
    Tensor::new(fd, data)
}

/// Winner-take-all readout: `[N, 1, H, W]` of the best disparity index, ties to the smallest.
pub fn argmax_disparity(cv: &CostVolume) -> Tensor {
    let v = cv.values();
    let d = v.dims();
    let plane = d.plane();
    let mut out = Vec::with_capacity(d.n * plane);
    for n in 0..d.n {
        let mut best = v.plane(n, 0).to_vec();
        let mut idx = vec![0.0f32; plane];
        for i in 1..d.c {
            for ((b, k), &x) in best.iter_mut().zip(idx.iter_mut()).zip(v.plane(n, i)) {
                if x > *b {
                    *b = x;
                    *k = i as f32;
                }
            }
        }
        out.extend(idx);
    }
    Tensor::from_raw(Dims::new(d.n, 1, d.h, d.w), out)
}

/// Extents a MAC count was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    pub multiply_accumulates: u64,
    pub kind: CostKind,
    pub shape: MacShape,
}

/// Closed-form multiply-accumulate counts.
///
/// Cosine: `3·C·H·W·d` (dot product and both squared norms per disparity).
/// LND and multi-head: `6·C·H·W + C·H·W·d` (two layer norms at `3·C·H·W`
/// each, then one dot product per disparity).
pub fn mac_count(kind: CostKind, c: usize, h: usize, w: usize, d: usize, heads: usize) -> MacCount {
    let chw = (c * h * w) as u64;
    let multiply_accumulates = match kind {
        CostKind::Cosine => 3 * chw * d as u64,
        CostKind::Lnd | CostKind::MultiHead => 6 * chw + chw * d as u64,
    };
    MacCount {
        multiply_accumulates,
        kind,
        shape: MacShape { c, h, w, d, heads },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn cosine_self_similarity_and_orthogonality() {
        let t = random(Dims::new(1, 4, 3, 6), 1);
        let cv = cost_volume_cosine(&t, &t, 3).unwrap();
        assert!(cv.slice(0).unwrap().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));

        let l = Tensor::new(Dims::new(1, 2, 1, 2), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let r = Tensor::new(Dims::new(1, 2, 1, 2), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let cv = cost_volume_cosine(&l, &r, 1).unwrap();
        assert_eq!(cv.values().data(), &[0.0, 0.0]);
    }

    #[test]
    fn cosine_zero_norm_scores_zero() {
        let l = Tensor::zeros(Dims::new(1, 3, 2, 4)).unwrap();
        let r = random(Dims::new(1, 3, 2, 4), 2);
        let cv = cost_volume_cosine(&l, &r, 2).unwrap();
        assert!(cv.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_matches_scalar_loop() {
        let l = random(Dims::new(1, 3, 1, 4), 3);
        let r = random(Dims::new(1, 3, 1, 4), 4);
        let cv = cost_volume_cosine(&l, &r, 2).unwrap();
        let expect = oracle::cosine_cost_volume(&l, &r, 2, &mut oracle::MacCounter::default());
        assert!(cv.values().max_abs_diff(&expect).unwrap() <= 1e-6);
    }

    #[test]
    fn lnd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::from_fn(Dims::new(1, 16, 2, 5), |_, _, _, _| rng.random_range(-2.0..2.0)).unwrap();
        let p = LayerNormParams::identity(16, 1e-5).unwrap();
        let cv = cost_volume_lnd(&t, &t, 2, &p).unwrap();
        for &v in cv.slice(0).unwrap().data() {
            assert!((v - 16.0).abs() <= 0.16, "{v}");
        }

        let constant = Tensor::from_fn(Dims::new(1, 4, 2, 5), |_, _, h, w| (h * 5 + w) as f32).unwrap();
        let p = LayerNormParams::identity(4, 1e-5).unwrap();
        let cv = cost_volume_lnd(&constant, &constant, 3, &p).unwrap();
        assert!(cv.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lnd_over_c_is_centered_cosine() {
        let c = 12;
        let l = random(Dims::new(1, c, 3, 8), 6);
        let r = random(Dims::new(1, c, 3, 8), 7);
        let p = LayerNormParams::identity(c, 1e-5).unwrap();
        let cv = cost_volume_lnd(&l, &r, 4, &p).unwrap();
        for i in 0..4 {
            for h in 0..3 {
                for w in 0..8 {
                    let a: Vec<f64> = (0..c).map(|k| l.at(0, k, h, w) as f64).collect();
                    let b: Vec<f64> = (0..c).map(|k| r.at(0, k, h, (w + 8 - i) % 8) as f64).collect();
                    let expect = oracle::centered_cosine(&a, &b);
                    let got = cv.values().at(0, i, h, w) as f64 / c as f64;
                    assert!((got - expect).abs() <= 1e-4, "{got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn multi_head_examples() {
        let l = random(Dims::new(1, 8, 3, 7), 8);
        let r = random(Dims::new(1, 8, 3, 7), 9);
        let cfg = CostVolumeConfig::new(4, 1).unwrap().with_dot_scale(false);
        let mh = multi_head_cost_volume(&l, &r, &cfg, None).unwrap();
        let lnd = cost_volume_lnd(&l, &r, 4, &LayerNormParams::identity(8, 1e-5).unwrap()).unwrap();
        assert!(mh.values().max_abs_diff(lnd.values()).unwrap() <= 1e-5);

        let constant = Tensor::full(Dims::new(1, 8, 3, 7), 0.25).unwrap();
        for heads in [1, 2, 4, 8] {
            let cfg = CostVolumeConfig::new(3, heads).unwrap();
            let cv = multi_head_cost_volume(&constant, &constant, &cfg, None).unwrap();
            assert!(cv.values().data().iter().all(|&v| v == 0.0));
        }

        let cfg = CostVolumeConfig::new(4, 2).unwrap();
        let cv = multi_head_cost_volume(
            &random(Dims::new(2, 8, 3, 5), 1),
            &random(Dims::new(2, 8, 3, 5), 2),
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(cv.values().dims(), Dims::new(2, 4, 3, 5));
    }

    #[test]
    fn multi_head_contract_errors() {
        let t = random(Dims::new(1, 6, 2, 5), 1);
        assert!(multi_head_cost_volume(&t, &t, &CostVolumeConfig::new(2, 4).unwrap(), None).is_err());
        assert!(multi_head_cost_volume(&t, &t, &CostVolumeConfig::new(5, 2).unwrap(), None).is_err());
        let other = random(Dims::new(1, 6, 2, 6), 1);
        assert!(multi_head_cost_volume(&t, &other, &CostVolumeConfig::new(2, 2).unwrap(), None).is_err());
        assert!(cost_volume_cosine(&t, &t, 5).is_err());
        assert!(CostVolumeConfig::new(0, 1).is_err());
    }

    #[test]
    fn argmax_examples() {
        let inc = Tensor::from_fn(Dims::new(1, 4, 2, 3), |_, i, h, w| (i * 10 + h + w) as f32).unwrap();
        let cv = CostVolume::new(inc, CostKind::Lnd, 1, false).unwrap();
        assert!(argmax_disparity(&cv).data().iter().all(|&v| v == 3.0));

        let flat = CostVolume::new(Tensor::full(Dims::new(2, 5, 2, 2), 0.5).unwrap(), CostKind::Lnd, 1, false).unwrap();
        let a = argmax_disparity(&flat);
        assert_eq!(a.dims(), Dims::new(2, 1, 2, 2));
        assert!(a.data().iter().all(|&v| v == 0.0));

        let r = random(Dims::new(1, 4, 2, 2), 11);
        let cv = CostVolume::new(r.clone(), CostKind::Lnd, 1, false).unwrap();
        let a = argmax_disparity(&cv);
        for h in 0..2 {
            for w in 0..2 {
                let mut best = 0;
                for i in 1..4 {
                    if r.at(0, i, h, w) > r.at(0, best, h, w) {
                        best = i;
                    }
                }
                assert_eq!(a.at(0, 0, h, w), best as f32);
            }
        }
    }

    #[test]
    fn mac_count_examples() {
        assert_eq!(mac_count(CostKind::Cosine, 64, 4, 4, 8, 1).multiply_accumulates, 24576);
        assert_eq!(mac_count(CostKind::MultiHead, 64, 4, 4, 8, 4).multiply_accumulates, 14336);
        for d in 1..=32 {
            let cos = mac_count(CostKind::Cosine, 16, 8, 8, d, 1).multiply_accumulates;
            let mh = mac_count(CostKind::MultiHead, 16, 8, 8, d, 2).multiply_accumulates;
            assert_eq!(mh < cos, d > 3, "d = {d}");
        }
    }

    #[test]
    fn wrap_mask_marks_rolled_strip() {
        let cv = cost_volume_cosine(&random(Dims::new(1, 2, 2, 5), 1), &random(Dims::new(1, 2, 2, 5), 2), 3).unwrap();
        let m = cv.wrap_mask();
        assert_eq!(m.at(0, 2, 1, 1), 0.0);
        assert_eq!(m.at(0, 2, 1, 2), 1.0);
        assert_eq!(m.at(0, 0, 0, 0), 1.0);
    }

    #[test]
    fn metadata_round_trip_and_files() {
        let cv = multi_head_cost_volume(
            &random(Dims::new(1, 4, 2, 5), 1),
            &random(Dims::new(1, 4, 2, 5), 2),
            &CostVolumeConfig::new(3, 2).unwrap(),
            None,
        )
        .unwrap();
        let text = cv.metadata().to_string();
        assert_eq!(text, "kind=multihead\nd=3\nheads=2\ndot_scale=true\n");
        assert_eq!(text.parse::<CostVolumeMeta>().unwrap(), cv.metadata());

        let dir = std::env::temp_dir().join(format!("stereo-kit-cv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cv.sten");
        cv.save(&path).unwrap();
        assert_eq!(CostVolume::load(&path).unwrap(), cv);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
