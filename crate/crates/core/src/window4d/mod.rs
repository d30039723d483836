//! 4D window attention machinery: dynamic window partition, fixed-capacity
//! set chunking with padding masks, additive 4D positional encoding, masked
//! set attention, and 4D max pooling.
//!
//! A block runs two layers; each layer shifts the window grid by its
//! configured offset, sorts voxels along an alternating axis, applies masked
//! multi-head attention within each set, and feeds the result through a
//! two-layer feed-forward with residual connections. Attention never changes
//! the active-site set.

mod attention;
mod partition;
mod pool;

pub use attention::{
    dsvt4d_block, feed_forward, set_attention, AttentionParams, Dsvt4dParams, FeedForwardParams,
    LayerParams,
};
pub use partition::{
    assign_windows, partition_sets, positional_encoding, PosTables, SetPartition, SortAxis,
    VoxelSet, WindowAssignment,
};
pub use pool::{pool_4d, PoolAxis};

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug)]
pub enum Window4DError {
    InvalidConfig(String),
    ShapeMismatch(String),
    OutOfRangeCoord { axis: usize, coord: usize, extent: usize },
}

impl fmt::Display for Window4DError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window4DError::InvalidConfig(msg) => write!(f, "invalid window config: {msg}"),
            Window4DError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Window4DError::OutOfRangeCoord { axis, coord, extent } => write!(
                f,
                "inner coordinate {coord} on axis {axis} exceeds table extent {extent}"
            ),
        }
    }
}

impl std::error::Error for Window4DError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Window extent (L, W, H, T) in voxels.
    pub window_shape: [usize; 4],
    /// Per-layer window-grid shifts.
    pub shifts: Vec<[usize; 4]>,
    /// Maximum voxels per attention set.
    pub set_capacity: usize,
    /// Per-axis window subdivision multiplier; 1 everywhere is a no-op.
    pub hybrid_factor: [usize; 4],
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_shape: [60, 60, 1, 2],
            shifts: vec![[0, 0, 0, 0], [30, 30, 0, 0]],
            set_capacity: 120,
            hybrid_factor: [1, 1, 1, 1],
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), Window4DError> {
        if self.window_shape.iter().any(|&w| w == 0) {
            return Err(Window4DError::InvalidConfig(
                "window shape components must be >= 1".into(),
            ));
        }
        if self.set_capacity == 0 {
            return Err(Window4DError::InvalidConfig("set capacity must be >= 1".into()));
        }
        if self.hybrid_factor.iter().any(|&h| h == 0) {
            return Err(Window4DError::InvalidConfig(
                "hybrid factor components must be >= 1".into(),
            ));
        }
        let eff = self.effective_window();
        for shift in &self.shifts {
            for a in 0..4 {
                if shift[a] >= eff[a] {
                    return Err(Window4DError::InvalidConfig(format!(
                        "shift {shift:?} must be componentwise < window {eff:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Window extent after the hybrid-factor subdivision.
    pub fn effective_window(&self) -> [usize; 4] {
        let mut eff = [0usize; 4];
        for a in 0..4 {
            eff[a] = (self.window_shape[a] / self.hybrid_factor[a]).max(1);
        }
        eff
    }
}
