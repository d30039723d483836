//! Brute-force dense reference semantics for the sparse ops.
//!
//! The dense path exists purely as a test oracle: plain nested loops over
//! every output cell and kernel position, guarded to desk-scale sizes.

use super::tensor::SparseTensor4D;
use super::{kernel_offsets, ConvSpec4D, Sparse4DError};

const CELL_GUARD: usize = 1 << 21;

/// Dense 4D tensor, row-major over (x, y, z, t, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor4D {
    pub shape: [usize; 4],
    pub channels: usize,
    pub data: Vec<f32>,
}

impl DenseTensor4D {
    pub fn zeros(shape: [usize; 4], channels: usize) -> Result<Self, Sparse4DError> {
        let cells: usize = shape.iter().product();
        if cells > CELL_GUARD {
            return Err(Sparse4DError::SizeGuardExceeded {
                cells,
                limit: CELL_GUARD,
            });
        }
        Ok(Self {
            shape,
            channels,
            data: vec![0.0; cells * channels],
        })
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        (((idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2]) * self.shape[3] + idx[3])
            * self.channels
    }

    pub fn cell(&self, idx: [usize; 4]) -> &[f32] {
        let o = self.offset(idx);
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, idx: [usize; 4]) -> &mut [f32] {
        let o = self.offset(idx);
        &mut self.data[o..o + self.channels]
    }
}

/// Scatter a sparse tensor into a dense one.
pub fn to_dense(x: &SparseTensor4D) -> Result<DenseTensor4D, Sparse4DError> {
    let shape = x.spatial_shape();
    let shape = [shape[0] as usize, shape[1] as usize, shape[2] as usize, shape[3] as usize];
    let mut dense = DenseTensor4D::zeros(shape, x.channels())?;
    for (row, idx) in x.indices().iter().enumerate() {
        let cell = dense.cell_mut([idx[0] as usize, idx[1] as usize, idx[2] as usize, idx[3] as usize]);
        cell.copy_from_slice(x.feature_row(row));
    }
    Ok(dense)
}

/// Direct nested-loop 4D convolution; reference semantics for the sparse
/// forward pass. out[q] = bias + sum_k W[k] . in[q*stride + k - pad].
pub fn dense_conv4d(
    input: &DenseTensor4D,
    weights: &[f32],
    bias: Option<&[f32]>,
    spec: &ConvSpec4D,
) -> Result<DenseTensor4D, Sparse4DError> {
    spec.validate()?;
    if input.channels != spec.in_channels {
        return Err(Sparse4DError::ChannelMismatch {
            expected: spec.in_channels,
            actual: input.channels,
        });
    }
    let kvol = spec.kernel_volume();
    if weights.len() != kvol * spec.in_channels * spec.out_channels {
        return Err(Sparse4DError::ShapeMismatch(format!(
            "weights have {} values, expected {}",
            weights.len(),
            kvol * spec.in_channels * spec.out_channels
        )));
    }
    let in_shape = [
        input.shape[0] as i32,
        input.shape[1] as i32,
        input.shape[2] as i32,
        input.shape[3] as i32,
    ];
    let out_shape_i = spec.output_shape(in_shape)?;
    let out_shape = [
        out_shape_i[0] as usize,
        out_shape_i[1] as usize,
        out_shape_i[2] as usize,
        out_shape_i[3] as usize,
    ];
    let mut out = DenseTensor4D::zeros(out_shape, spec.out_channels)?;
    let offsets = kernel_offsets(spec.kernel);
    let (cin, cout) = (spec.in_channels, spec.out_channels);

    for q0 in 0..out_shape[0] {
        for q1 in 0..out_shape[1] {
            for q2 in 0..out_shape[2] {
                for q3 in 0..out_shape[3] {
                    let q = [q0, q1, q2, q3];
                    let mut acc = vec![0.0f64; cout];
                    if let Some(b) = bias {
                        for (a, &bv) in acc.iter_mut().zip(b) {
                            *a = bv as f64;
                        }
                    }
                    for (kid, k) in offsets.iter().enumerate() {
                        let mut p = [0i32; 4];
                        let mut inside = true;
                        for a in 0..4 {
                            p[a] = q[a] as i32 * spec.stride[a] as i32 + k[a] - spec.padding[a] as i32;
                            if p[a] < 0 || p[a] >= in_shape[a] {
                                inside = false;
                                break;
                            }
                        }
                        if !inside {
                            continue;
                        }
                        let x = input.cell([p[0] as usize, p[1] as usize, p[2] as usize, p[3] as usize]);
                        let w = &weights[kid * cin * cout..(kid + 1) * cin * cout];
                        for ci in 0..cin {
                            let xv = x[ci] as f64;
                            if xv == 0.0 {
                                continue;
                            }
                            for co in 0..cout {
                                acc[co] += xv * w[ci * cout + co] as f64;
                            }
                        }
                    }
                    let cell = out.cell_mut(q);
                    for (c, a) in cell.iter_mut().zip(&acc) {
                        *c = *a as f32;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Structurally active output sites of a conv over a set of active input
/// sites: every output cell reached by at least one (input, kernel) hit.
/// Returned canonically sorted.
pub fn dense_active_sites(
    indices: &[[i32; 4]],
    spatial_shape: [i32; 4],
    spec: &ConvSpec4D,
) -> Result<Vec<[i32; 4]>, Sparse4DError> {
    spec.validate()?;
    if spec.submanifold {
        return Ok(indices.to_vec());
    }
    let out_shape = spec.output_shape(spatial_shape)?;
    let offsets = kernel_offsets(spec.kernel);
    let mut sites: Vec<[i32; 4]> = Vec::new();
    for &p in indices {
        'next_k: for k in &offsets {
            let mut q = [0i32; 4];
            for a in 0..4 {
                let num = p[a] + spec.padding[a] as i32 - k[a];
                let s = spec.stride[a] as i32;
                if num < 0 || num % s != 0 {
                    continue 'next_k;
                }
                q[a] = num / s;
                if q[a] >= out_shape[a] {
                    continue 'next_k;
                }
            }
            sites.push(q);
        }
    }
    sites.sort_unstable();
    sites.dedup();
    Ok(sites)
}
