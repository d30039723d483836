//! Temporal separation and BEV densification.
//!
//! The encoder output keeps two time slices. They are split by the t index
//! into two 3D sparse tensors and each is scattered into a dense bird's-eye
//! grid, compressing height either by per-channel max or by stacking the z
//! slices along the channel axis.

use crate::sparse4d::SparseTensor4D;
use crate::types::TimeTag;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug)]
pub enum BevError {
    TemporalShape { nt: i32 },
    TooManyChannels { channels: usize },
}

impl fmt::Display for BevError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BevError::TemporalShape { nt } => {
                write!(f, "temporal separation needs Nt = 2, got {nt}")
            }
            BevError::TooManyChannels { channels } => {
                write!(f, "concat compression would produce {channels} channels")
            }
        }
    }
}

impl std::error::Error for BevError {}

/// Split a two-slice tensor into (current, future) tensors with Nt = 1.
/// Features are untouched; the t index is dropped to zero.
pub fn separate_temporal(
    x: &SparseTensor4D,
) -> Result<(SparseTensor4D, SparseTensor4D), BevError> {
    let shape = x.spatial_shape();
    if shape[3] != 2 {
        return Err(BevError::TemporalShape { nt: shape[3] });
    }
    let c = x.channels();
    let mut out_shape = shape;
    out_shape[3] = 1;
    let split = |want: i32| -> SparseTensor4D {
        let mut indices = Vec::new();
        let mut features = Vec::new();
        for (row, idx) in x.indices().iter().enumerate() {
            if idx[3] == want {
                indices.push([idx[0], idx[1], idx[2], 0]);
                features.extend_from_slice(x.feature_row(row));
            }
        }
        SparseTensor4D::new(indices, features, c, out_shape)
            .expect("slice of a canonical tensor stays canonical")
    };
    Ok((split(0), split(1)))
}

/// Height compression operator for [`densify_bev`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BevCompression {
    MaxOverZ,
    ConcatOverZ,
}

/// Dense BEV feature grid, channel-major (C x Ny x Nx).
#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub channels: usize,
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f32>,
    /// Meters per cell after backbone striding.
    pub resolution: f64,
    /// World position of the (ix = 0, iy = 0) cell corner.
    pub origin: [f64; 2],
    pub time_tag: TimeTag,
    pub delta_t: f64,
}

impl BevMap {
    #[inline]
    pub fn at(&self, c: usize, iy: usize, ix: usize) -> f32 {
        self.data[(c * self.ny + iy) * self.nx + ix]
    }

    fn at_mut(&mut self, c: usize, iy: usize, ix: usize) -> &mut f32 {
        &mut self.data[(c * self.ny + iy) * self.nx + ix]
    }

    pub fn cell_feature(&self, iy: usize, ix: usize) -> Vec<f32> {
        (0..self.channels).map(|c| self.at(c, iy, ix)).collect()
    }
}

/// Grid metadata carried into the densified map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevMeta {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub time_tag: TimeTag,
    pub delta_t: f64,
}

/// Scatter a single-slice sparse tensor into a zero-initialized dense BEV
/// grid, compressing the height axis per `mode`.
pub fn densify_bev(
    x: &SparseTensor4D,
    mode: BevCompression,
    meta: &BevMeta,
) -> Result<BevMap, BevError> {
    let shape = x.spatial_shape();
    debug_assert_eq!(shape[3], 1, "densify expects a separated tensor");
    let (nx, ny, nz) = (shape[0] as usize, shape[1] as usize, shape[2] as usize);
    let c = x.channels();
    let out_channels = match mode {
        BevCompression::MaxOverZ => c,
        BevCompression::ConcatOverZ => {
            let total = c * nz;
            if total > 4096 {
                return Err(BevError::TooManyChannels { channels: total });
            }
            total
        }
    };
    let mut map = BevMap {
        channels: out_channels,
        ny,
        nx,
        data: vec![0.0; out_channels * ny * nx],
        resolution: meta.resolution,
        origin: meta.origin,
        time_tag: meta.time_tag,
        delta_t: meta.delta_t,
    };
    match mode {
        BevCompression::MaxOverZ => {
            let mut written = vec![false; ny * nx];
            for (row, idx) in x.indices().iter().enumerate() {
                let (ix, iy) = (idx[0] as usize, idx[1] as usize);
                let feats = x.feature_row(row);
                if written[iy * nx + ix] {
                    for (ci, &f) in feats.iter().enumerate() {
                        let cell = map.at_mut(ci, iy, ix);
                        *cell = cell.max(f);
                    }
                } else {
                    written[iy * nx + ix] = true;
                    for (ci, &f) in feats.iter().enumerate() {
                        *map.at_mut(ci, iy, ix) = f;
                    }
                }
            }
        }
        BevCompression::ConcatOverZ => {
            for (row, idx) in x.indices().iter().enumerate() {
                let (ix, iy, iz) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
                let feats = x.feature_row(row);
                for (ci, &f) in feats.iter().enumerate() {
                    *map.at_mut(iz * c + ci, iy, ix) = f;
                }
            }
        }
    }
    Ok(map)
}
