//! Sparse 4D tensor engine.
//!
//! Active voxels are stored as canonically sorted (ix, iy, iz, it) indices
//! with row-aligned feature vectors. Convolutions run in two phases: a
//! [`Rulebook`] gathers per-kernel-offset (input, output) row pairs, then the
//! forward pass accumulates weighted features in a fixed order so results are
//! bit-identical across runs.

mod backbone;
mod conv;
mod hash;
mod oracle;
mod rulebook;
mod tensor;

pub use backbone::{BackboneConfig, SpConv4dBackbone};
pub use conv::{batchnorm_relu, sparse_conv4d, BatchNormParams};
pub use oracle::{dense_active_sites, dense_conv4d, to_dense, DenseTensor4D};
pub use rulebook::{build_rulebook, Rulebook};
pub use tensor::{pack_index, SparseTensor4D};

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug)]
pub enum Sparse4DError {
    NonCanonicalIndices(String),
    IndexOutOfBounds { index: [i32; 4], shape: [i32; 4] },
    ChannelMismatch { expected: usize, actual: usize },
    ShapeMismatch(String),
    InvalidSpec(String),
    NegativeVariance(f64),
    SizeGuardExceeded { cells: usize, limit: usize },
    TopologyMismatch(String),
}

impl fmt::Display for Sparse4DError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sparse4DError::NonCanonicalIndices(msg) => write!(f, "non-canonical indices: {msg}"),
            Sparse4DError::IndexOutOfBounds { index, shape } => {
                write!(f, "index {index:?} out of bounds for shape {shape:?}")
            }
            Sparse4DError::ChannelMismatch { expected, actual } => {
                write!(f, "channel mismatch: expected {expected}, got {actual}")
            }
            Sparse4DError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Sparse4DError::InvalidSpec(msg) => write!(f, "invalid conv spec: {msg}"),
            Sparse4DError::NegativeVariance(v) => write!(f, "negative variance {v}"),
            Sparse4DError::SizeGuardExceeded { cells, limit } => {
                write!(f, "dense oracle guard exceeded: {cells} cells > {limit}")
            }
            Sparse4DError::TopologyMismatch(msg) => write!(f, "weight bundle/topology mismatch: {msg}"),
        }
    }
}

impl std::error::Error for Sparse4DError {}

/// Geometry of one sparse convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec4D {
    pub kernel: [usize; 4],
    pub stride: [usize; 4],
    pub padding: [usize; 4],
    pub in_channels: usize,
    pub out_channels: usize,
    /// Submanifold mode keeps output sites equal to input sites.
    pub submanifold: bool,
}

impl ConvSpec4D {
    pub fn submanifold(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel: [3; 4],
            stride: [1; 4],
            padding: [1; 4],
            in_channels,
            out_channels,
            submanifold: true,
        }
    }

    pub fn strided(in_channels: usize, out_channels: usize, stride: [usize; 4]) -> Self {
        Self {
            kernel: [3; 4],
            stride,
            padding: [1; 4],
            in_channels,
            out_channels,
            submanifold: false,
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn validate(&self) -> Result<(), Sparse4DError> {
        if self.kernel.iter().any(|&k| k == 0) {
            return Err(Sparse4DError::InvalidSpec("kernel components must be >= 1".into()));
        }
        if self.stride.iter().any(|&s| s == 0) {
            return Err(Sparse4DError::InvalidSpec("stride components must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Sparse4DError::InvalidSpec("channel counts must be >= 1".into()));
        }
        if self.submanifold {
            if self.kernel.iter().any(|&k| k % 2 == 0) {
                return Err(Sparse4DError::InvalidSpec(
                    "submanifold mode requires odd kernel components".into(),
                ));
            }
            if self.stride != [1; 4] {
                return Err(Sparse4DError::InvalidSpec(
                    "submanifold mode requires unit stride".into(),
                ));
            }
        }
        Ok(())
    }

    /// Output spatial shape for an input shape, standard strided-conv rule.
    pub fn output_shape(&self, input: [i32; 4]) -> Result<[i32; 4], Sparse4DError> {
        if self.submanifold {
            return Ok(input);
        }
        let mut out = [0i32; 4];
        for a in 0..4 {
            let n = input[a] as i64 + 2 * self.padding[a] as i64 - self.kernel[a] as i64;
            if n < 0 {
                return Err(Sparse4DError::ShapeMismatch(format!(
                    "axis {a}: input {} too small for kernel {} with padding {}",
                    input[a], self.kernel[a], self.padding[a]
                )));
            }
            out[a] = (n / self.stride[a] as i64 + 1) as i32;
        }
        Ok(out)
    }
}

/// Enumerate kernel positions in lexicographic order.
pub(crate) fn kernel_offsets(kernel: [usize; 4]) -> Vec<[i32; 4]> {
    let mut out = Vec::with_capacity(kernel.iter().product());
    for k0 in 0..kernel[0] as i32 {
        for k1 in 0..kernel[1] as i32 {
            for k2 in 0..kernel[2] as i32 {
                for k3 in 0..kernel[3] as i32 {
                    out.push([k0, k1, k2, k3]);
                }
            }
        }
    }
    out
}
