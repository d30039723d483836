//! Synthetic sparse-tensor generators shared by tests and benchmarks.

use crate::sparse4d::SparseTensor4D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draw `n` distinct canonical indices inside `shape`.
pub fn random_indices(n: usize, shape: [i32; 4], seed: u64) -> Vec<[i32; 4]> {
    let cells: i64 = shape.iter().map(|&s| s as i64).product();
    assert!(
        (n as i64) <= cells,
        "cannot draw {n} distinct indices from {cells} cells"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(n * 2);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let idx = [
            rng.gen_range(0..shape[0]),
            rng.gen_range(0..shape[1]),
            rng.gen_range(0..shape[2]),
            rng.gen_range(0..shape[3]),
        ];
        if seen.insert(idx) {
            out.push(idx);
        }
    }
    out.sort_unstable();
    out
}

/// Random canonical tensor with features drawn uniformly from [-1, 1).
pub fn random_tensor(n: usize, shape: [i32; 4], channels: usize, seed: u64) -> SparseTensor4D {
    let indices = random_indices(n, shape, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37));
    let features: Vec<f32> = (0..indices.len() * channels)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    SparseTensor4D::new(indices, features, channels, shape).expect("generated indices are canonical")
}
