//! Dense NCHW tensors and the primitive operators the cost volumes are built from.

mod ops;
pub mod sten;

pub use ops::{
    group_pointwise_conv, layer_norm_channel, roll_horizontal, spatial_gradient, subsample2,
    GroupConvWeights, LayerNormParams, DEFAULT_LAYER_NORM_EPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor in batch, channel, height, width order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Always false for validated dims; present for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn to_vec(&self) -> Vec<usize> {
        vec![self.n, self.c, self.h, self.w]
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::InvalidShape(format!(
                "all extents must be >= 1, got {:?}",
                self.to_vec()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major NCHW tensor of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking extents, length and finiteness.
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::InvalidShape(format!(
                "{} elements for dims {}, expected {}",
                data.len(),
                dims,
                dims.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: Dims, value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.len()])
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn<F>(dims: Dims, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize, usize) -> f32,
    {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for h in 0..dims.h {
                    for w in 0..dims.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    /// Wraps kernel output that is finite by construction.
    pub(crate) fn from_raw(dims: Dims, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let d = &self.dims;
        ((n * d.c + c) * d.h + h) * d.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    /// One `H × W` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    /// Channel slice `[c0, c1)` of every batch item, as a new tensor.
    pub fn channel_slice(&self, c0: usize, c1: usize) -> Result<Tensor> {
        if c0 >= c1 || c1 > self.dims.c {
            return Err(Error::InvalidParameter(format!(
                "channel range {c0}..{c1} outside 0..{}",
                self.dims.c
            )));
        }
        let dims = Dims::new(self.dims.n, c1 - c0, self.dims.h, self.dims.w);
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..self.dims.n {
            for c in c0..c1 {
                data.extend_from_slice(self.plane(n, c));
            }
        }
        Ok(Tensor::from_raw(dims, data))
    }

    pub fn require_dims(&self, expected: Dims) -> Result<()> {
        if self.dims != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                found: self.dims.to_vec(),
            });
        }
        Ok(())
    }

    /// Elementwise sum with a tensor of identical dims.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.require_dims(other.dims)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.dims, data)
    }

    pub fn map<F: Fn(f32) -> f32>(&self, f: F) -> Result<Tensor> {
        Tensor::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        self.require_dims(other.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}
