//! Sparse convolution forward pass and inference-mode normalization.

use super::rulebook::Rulebook;
use super::tensor::SparseTensor4D;
use super::{ConvSpec4D, Sparse4DError};

/// Gather/scatter forward pass.
///
/// `weights` is shaped (kernel volume, in_channels, out_channels) row-major;
/// `bias`, when present, has out_channels entries. Accumulation runs in f64
/// over kernel positions in lexicographic order and pairs sorted by input
/// row, so outputs are bit-identical for identical inputs.
pub fn sparse_conv4d(
    x: &SparseTensor4D,
    weights: &[f32],
    bias: Option<&[f32]>,
    spec: &ConvSpec4D,
    rulebook: &Rulebook,
) -> Result<SparseTensor4D, Sparse4DError> {
    spec.validate()?;
    if x.channels() != spec.in_channels {
        return Err(Sparse4DError::ChannelMismatch {
            expected: spec.in_channels,
            actual: x.channels(),
        });
    }
    if rulebook.spec() != spec {
        return Err(Sparse4DError::ShapeMismatch(
            "rulebook was built for a different conv spec".into(),
        ));
    }
    if rulebook.in_sites() != x.len() {
        return Err(Sparse4DError::ShapeMismatch(format!(
            "rulebook covers {} input sites, tensor has {}",
            rulebook.in_sites(),
            x.len()
        )));
    }
    let kvol = spec.kernel_volume();
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    if weights.len() != kvol * cin * cout {
        return Err(Sparse4DError::ShapeMismatch(format!(
            "weights have {} values, expected {}",
            weights.len(),
            kvol * cin * cout
        )));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Sparse4DError::ChannelMismatch {
                expected: cout,
                actual: b.len(),
            });
        }
    }

    let n_out = rulebook.out_indices().len();
    let mut acc = vec![0.0f64; n_out * cout];
    if let Some(b) = bias {
        for row in 0..n_out {
            for (o, bo) in b.iter().enumerate() {
                acc[row * cout + o] = *bo as f64;
            }
        }
    }

    let feats = x.features();
    for (kid, pairs) in rulebook.pairs().iter().enumerate() {
        let w = &weights[kid * cin * cout..(kid + 1) * cin * cout];
        for &(i, j) in pairs {
            let xrow = &feats[i as usize * cin..(i as usize + 1) * cin];
            let out = &mut acc[j as usize * cout..(j as usize + 1) * cout];
            for (ci, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let xv = xv as f64;
                let wrow = &w[ci * cout..(ci + 1) * cout];
                for (o, &wv) in wrow.iter().enumerate() {
                    out[o] += xv * wv as f64;
                }
            }
        }
    }

    let features: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
    SparseTensor4D::new(
        rulebook.out_indices().to_vec(),
        features,
        cout,
        rulebook.out_shape(),
    )
}

/// Per-channel batch-norm parameters for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps: 1e-5,
        }
    }
}

/// y = max(0, gamma * (x - mean) / sqrt(var + eps) + beta), per channel.
pub fn batchnorm_relu(x: &SparseTensor4D, p: &BatchNormParams) -> Result<SparseTensor4D, Sparse4DError> {
    let c = x.channels();
    for (name, v) in [("gamma", &p.gamma), ("beta", &p.beta), ("mean", &p.mean), ("var", &p.var)] {
        if v.len() != c {
            return Err(Sparse4DError::ShapeMismatch(format!(
                "{name} has {} entries, expected {c}",
                v.len()
            )));
        }
    }
    let mut scale = Vec::with_capacity(c);
    for &v in &p.var {
        if v < 0.0 {
            return Err(Sparse4DError::NegativeVariance(v as f64));
        }
        let denom = (v as f64 + p.eps).sqrt();
        if denom <= 0.0 {
            return Err(Sparse4DError::NegativeVariance(v as f64));
        }
        scale.push(denom);
    }
    let mut out = Vec::with_capacity(x.features().len());
    for row in 0..x.len() {
        let f = x.feature_row(row);
        for ci in 0..c {
            let y = p.gamma[ci] as f64 * (f[ci] as f64 - p.mean[ci] as f64) / scale[ci]
                + p.beta[ci] as f64;
            out.push(y.max(0.0) as f32);
        }
    }
    x.with_features(out, c)
}

#[cfg(test)]
mod tests {
    use super::super::rulebook::build_rulebook;
    use super::*;

    fn tensor(indices: Vec<[i32; 4]>, features: Vec<f32>, c: usize) -> SparseTensor4D {
        SparseTensor4D::new(indices, features, c, [8, 8, 8, 2]).unwrap()
    }

    /// Identity kernel: 1 at the center position, zero elsewhere.
    fn identity_weights(spec: &ConvSpec4D) -> Vec<f32> {
        let kvol = spec.kernel_volume();
        let mut w = vec![0.0f32; kvol * spec.in_channels * spec.out_channels];
        let center = kvol / 2;
        for ci in 0..spec.in_channels {
            w[(center * spec.in_channels + ci) * spec.out_channels + ci] = 1.0;
        }
        w
    }

    #[test]
    fn identity_kernel_copies_features() {
        let spec = ConvSpec4D::submanifold(3, 3);
        let x = tensor(
            vec![[1, 1, 1, 0], [2, 1, 1, 1]],
            vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0],
            3,
        );
        let rb = build_rulebook(x.indices(), x.spatial_shape(), &spec).unwrap();
        let y = sparse_conv4d(&x, &identity_weights(&spec), None, &spec, &rb).unwrap();
        assert_eq!(y.indices(), x.indices());
        assert_eq!(y.features(), x.features());
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let spec = ConvSpec4D::strided(2, 4, [2, 2, 2, 1]);
        let x = SparseTensor4D::empty(2, [8, 8, 8, 2]);
        let rb = build_rulebook(x.indices(), x.spatial_shape(), &spec).unwrap();
        let w = vec![0.5f32; spec.kernel_volume() * 2 * 4];
        let y = sparse_conv4d(&x, &w, None, &spec, &rb).unwrap();
        assert!(y.is_empty());
        assert_eq!(y.spatial_shape(), [4, 4, 4, 2]);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let spec = ConvSpec4D::submanifold(3, 3);
        let x = tensor(vec![[1, 1, 1, 0]], vec![1.0, 2.0], 2);
        let rb = build_rulebook(x.indices(), x.spatial_shape(), &spec).unwrap();
        assert!(sparse_conv4d(&x, &identity_weights(&spec), None, &spec, &rb).is_err());
    }

    #[test]
    fn bias_is_applied_to_every_output_row() {
        let spec = ConvSpec4D::submanifold(1, 2);
        let x = tensor(vec![[1, 1, 1, 0]], vec![1.0], 1);
        let rb = build_rulebook(x.indices(), x.spatial_shape(), &spec).unwrap();
        let w = vec![0.0f32; spec.kernel_volume() * 2];
        let y = sparse_conv4d(&x, &w, Some(&[0.25, -0.5]), &spec, &rb).unwrap();
        assert_eq!(y.features(), &[0.25, -0.5]);
    }

    #[test]
    fn batchnorm_identity_passes_nonnegative_input() {
        let x = tensor(vec![[0, 0, 0, 0]], vec![0.5, 2.0], 2);
        let p = BatchNormParams {
            eps: 0.0,
            ..BatchNormParams::identity(2)
        };
        let y = batchnorm_relu(&x, &p).unwrap();
        assert_eq!(y.features(), x.features());
    }

    #[test]
    fn batchnorm_large_negative_beta_clamps_to_zero() {
        let x = tensor(vec![[0, 0, 0, 0]], vec![0.5, 2.0], 2);
        let mut p = BatchNormParams::identity(2);
        p.beta = vec![-100.0, -100.0];
        let y = batchnorm_relu(&x, &p).unwrap();
        assert!(y.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batchnorm_matches_scalar_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = 5;
        let feats: Vec<f32> = (0..3 * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = tensor(vec![[0, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0]], feats, c);
        let p = BatchNormParams {
            gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
            beta: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            mean: (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            var: (0..c).map(|_| rng.gen_range(0.1..2.0)).collect(),
            eps: 1e-5,
        };
        let y = batchnorm_relu(&x, &p).unwrap();
        for row in 0..3 {
            for ci in 0..c {
                let f = x.feature_row(row)[ci] as f64;
                let expect = (p.gamma[ci] as f64 * (f - p.mean[ci] as f64)
                    / (p.var[ci] as f64 + p.eps).sqrt()
                    + p.beta[ci] as f64)
                    .max(0.0) as f32;
                assert!((y.feature_row(row)[ci] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn negative_variance_is_rejected() {
        let x = tensor(vec![[0, 0, 0, 0]], vec![1.0], 1);
        let mut p = BatchNormParams::identity(1);
        p.var = vec![-0.1];
        assert!(batchnorm_relu(&x, &p).is_err());
    }

    #[test]
    fn linearity_on_shared_index_set() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let spec = ConvSpec4D::submanifold(2, 3);
        let indices = vec![[1, 1, 1, 0], [1, 2, 1, 0], [2, 2, 2, 1], [3, 2, 2, 1]];
        let fa: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fb: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f32> = (0..spec.kernel_volume() * 6).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let (a, b) = (0.7f32, -1.3f32);

        let xa = tensor(indices.clone(), fa.clone(), 2);
        let xb = tensor(indices.clone(), fb.clone(), 2);
        let combo: Vec<f32> = fa.iter().zip(&fb).map(|(x, y)| a * x + b * y).collect();
        let xc = tensor(indices.clone(), combo, 2);

        let rb = build_rulebook(&indices, [8, 8, 8, 2], &spec).unwrap();
        let ya = sparse_conv4d(&xa, &w, None, &spec, &rb).unwrap();
        let yb = sparse_conv4d(&xb, &w, None, &spec, &rb).unwrap();
        let yc = sparse_conv4d(&xc, &w, None, &spec, &rb).unwrap();
        for k in 0..yc.features().len() {
            let expect = a * ya.features()[k] + b * yb.features()[k];
            assert!((yc.features()[k] - expect).abs() < 1e-6);
        }
    }
}
