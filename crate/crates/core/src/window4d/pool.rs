//! 4D max pooling over the z and/or t axes.

use super::Window4DError;
use crate::sparse4d::SparseTensor4D;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolAxis {
    Z,
    T,
}

impl PoolAxis {
    fn index(&self) -> usize {
        match self {
            PoolAxis::Z => 2,
            PoolAxis::T => 3,
        }
    }
}

/// Merge voxels that share all non-pooled indices, taking the per-channel
/// max. Pooled axes collapse to extent 1.
pub fn pool_4d(x: &SparseTensor4D, axes: &[PoolAxis]) -> Result<SparseTensor4D, Window4DError> {
    if axes.is_empty() {
        return Err(Window4DError::InvalidConfig("pool axes must be nonempty".into()));
    }
    let c = x.channels();
    let mut merged: BTreeMap<[i32; 4], Vec<f32>> = BTreeMap::new();
    for (row, idx) in x.indices().iter().enumerate() {
        let mut key = *idx;
        for axis in axes {
            key[axis.index()] = 0;
        }
        let feats = x.feature_row(row);
        merged
            .entry(key)
            .and_modify(|acc| {
                for (a, f) in acc.iter_mut().zip(feats) {
                    *a = a.max(*f);
                }
            })
            .or_insert_with(|| feats.to_vec());
    }
    let mut shape = x.spatial_shape();
    for axis in axes {
        shape[axis.index()] = 1;
    }
    let mut indices = Vec::with_capacity(merged.len());
    let mut features = Vec::with_capacity(merged.len() * c);
    for (idx, feats) in merged {
        indices.push(idx);
        features.extend_from_slice(&feats);
    }
    SparseTensor4D::new(indices, features, c, shape)
        .map_err(|e| Window4DError::ShapeMismatch(e.to_string()))
}
