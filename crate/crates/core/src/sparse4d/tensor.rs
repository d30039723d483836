//! Canonical sparse 4D tensor storage.

use super::Sparse4DError;

/// Pack a non-negative 4D index into a u64 key, 16 bits per axis. Numeric
/// order of keys equals lexicographic order of indices.
pub fn pack_index(idx: [i32; 4]) -> u64 {
    debug_assert!(idx.iter().all(|&v| (0..=u16::MAX as i32).contains(&v)));
    ((idx[0] as u64) << 48) | ((idx[1] as u64) << 32) | ((idx[2] as u64) << 16) | (idx[3] as u64)
}

/// Sparse 4D tensor: unique, lexicographically sorted active indices with a
/// row-major N x C feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor4D {
    indices: Vec<[i32; 4]>,
    features: Vec<f32>,
    channels: usize,
    spatial_shape: [i32; 4],
}

impl SparseTensor4D {
    /// Build from canonical (sorted, unique, in-bounds) indices.
    pub fn new(
        indices: Vec<[i32; 4]>,
        features: Vec<f32>,
        channels: usize,
        spatial_shape: [i32; 4],
    ) -> Result<Self, Sparse4DError> {
        if spatial_shape.iter().any(|&n| n < 1) {
            return Err(Sparse4DError::ShapeMismatch(format!(
                "spatial shape {spatial_shape:?} must be >= 1 per axis"
            )));
        }
        if spatial_shape.iter().any(|&n| n > u16::MAX as i32 + 1) {
            return Err(Sparse4DError::ShapeMismatch(
                "grid axes are capped at 65536 (16-bit packed keys)".into(),
            ));
        }
        if features.len() != indices.len() * channels {
            return Err(Sparse4DError::ChannelMismatch {
                expected: indices.len() * channels,
                actual: features.len(),
            });
        }
        validate_canonical(&indices, spatial_shape)?;
        Ok(Self {
            indices,
            features,
            channels,
            spatial_shape,
        })
    }

    /// Build from unordered rows, sorting them into canonical order.
    /// Duplicate indices are rejected.
    pub fn from_unsorted(
        indices: Vec<[i32; 4]>,
        features: Vec<f32>,
        channels: usize,
        spatial_shape: [i32; 4],
    ) -> Result<Self, Sparse4DError> {
        if features.len() != indices.len() * channels {
            return Err(Sparse4DError::ChannelMismatch {
                expected: indices.len() * channels,
                actual: features.len(),
            });
        }
        let mut order: Vec<usize> = (0..indices.len()).collect();
        for (i, idx) in indices.iter().enumerate() {
            check_bounds(*idx, spatial_shape)?;
            let _ = i;
        }
        order.sort_unstable_by_key(|&i| pack_index(indices[i]));
        let sorted_indices: Vec<[i32; 4]> = order.iter().map(|&i| indices[i]).collect();
        let mut sorted_features = Vec::with_capacity(features.len());
        for &i in &order {
            sorted_features.extend_from_slice(&features[i * channels..(i + 1) * channels]);
        }
        Self::new(sorted_indices, sorted_features, channels, spatial_shape)
    }

    pub fn empty(channels: usize, spatial_shape: [i32; 4]) -> Self {
        Self {
            indices: Vec::new(),
            features: Vec::new(),
            channels,
            spatial_shape,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[[i32; 4]] {
        &self.indices
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f32] {
        &mut self.features
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn spatial_shape(&self) -> [i32; 4] {
        self.spatial_shape
    }

    pub fn feature_row(&self, row: usize) -> &[f32] {
        &self.features[row * self.channels..(row + 1) * self.channels]
    }

    /// Replace features in place, keeping indices. Widths must agree in rows.
    pub fn with_features(&self, features: Vec<f32>, channels: usize) -> Result<Self, Sparse4DError> {
        Self::new(self.indices.clone(), features, channels, self.spatial_shape)
    }
}

fn check_bounds(idx: [i32; 4], shape: [i32; 4]) -> Result<(), Sparse4DError> {
    for a in 0..4 {
        if idx[a] < 0 || idx[a] >= shape[a] {
            return Err(Sparse4DError::IndexOutOfBounds { index: idx, shape });
        }
    }
    Ok(())
}

pub(crate) fn validate_canonical(indices: &[[i32; 4]], shape: [i32; 4]) -> Result<(), Sparse4DError> {
    let mut prev: Option<u64> = None;
    for idx in indices {
        check_bounds(*idx, shape)?;
        let key = pack_index(*idx);
        if let Some(p) = prev {
            if key == p {
                return Err(Sparse4DError::NonCanonicalIndices(format!(
                    "duplicate index {idx:?}"
                )));
            }
            if key < p {
                return Err(Sparse4DError::NonCanonicalIndices(format!(
                    "index {idx:?} out of sort order"
                )));
            }
        }
        prev = Some(key);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_duplicate() {
        let shape = [8, 8, 8, 2];
        let bad = vec![[1, 0, 0, 0], [0, 0, 0, 0]];
        assert!(SparseTensor4D::new(bad, vec![0.0; 2], 1, shape).is_err());
        let dup = vec![[0, 0, 0, 0], [0, 0, 0, 0]];
        assert!(SparseTensor4D::new(dup, vec![0.0; 2], 1, shape).is_err());
    }

    #[test]
    fn rejects_out_of_bounds() {
        let shape = [8, 8, 8, 2];
        assert!(SparseTensor4D::new(vec![[8, 0, 0, 0]], vec![0.0], 1, shape).is_err());
        assert!(SparseTensor4D::new(vec![[-1, 0, 0, 0]], vec![0.0], 1, shape).is_err());
    }

    #[test]
    fn from_unsorted_sorts_rows_with_features() {
        let shape = [8, 8, 8, 2];
        let t = SparseTensor4D::from_unsorted(
            vec![[3, 0, 0, 0], [1, 0, 0, 0]],
            vec![3.0, 30.0, 1.0, 10.0],
            2,
            shape,
        )
        .unwrap();
        assert_eq!(t.indices(), &[[1, 0, 0, 0], [3, 0, 0, 0]]);
        assert_eq!(t.features(), &[1.0, 10.0, 3.0, 30.0]);
    }

    #[test]
    fn packed_key_order_is_lexicographic() {
        let a = pack_index([0, 5, 9, 1]);
        let b = pack_index([0, 6, 0, 0]);
        let c = pack_index([1, 0, 0, 0]);
        assert!(a < b && b < c);
    }
}
