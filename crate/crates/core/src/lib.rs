//! Stereo matching building blocks: NCHW tensors, cost volumes, homographies,
//! rectification positional encoding, losses, synthetic scenes and benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod check;
pub mod costvol;
pub mod encoding;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod oracle;
pub mod parallel;
pub mod synth;
pub mod tensor;
pub mod viz;

pub use costvol::{CostKind, CostVolume, CostVolumeConfig};
pub use error::{Error, Result};
pub use geometry::Homography;
pub use tensor::{Dims, Tensor};
