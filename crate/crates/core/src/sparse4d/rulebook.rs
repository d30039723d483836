//! Rulebook construction: per-kernel-offset gather/scatter pair lists.

use super::hash::KeyMap;
use super::tensor::{pack_index, validate_canonical};
use super::{kernel_offsets, ConvSpec4D, Sparse4DError};

/// Per-kernel-position (input_row, output_row) pair lists plus the output
/// index table. Pairs within a kernel position are sorted by input row, and
/// the forward pass walks kernel positions in lexicographic order, fixing the
/// accumulation order.
pub struct Rulebook {
    spec: ConvSpec4D,
    pairs: Vec<Vec<(u32, u32)>>,
    out_indices: Vec<[i32; 4]>,
    out_shape: [i32; 4],
    in_sites: usize,
}

impl Rulebook {
    pub fn spec(&self) -> &ConvSpec4D {
        &self.spec
    }

    pub fn pairs(&self) -> &[Vec<(u32, u32)>] {
        &self.pairs
    }

    pub fn out_indices(&self) -> &[[i32; 4]] {
        &self.out_indices
    }

    pub fn out_shape(&self) -> [i32; 4] {
        self.out_shape
    }

    pub fn in_sites(&self) -> usize {
        self.in_sites
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(|p| p.len()).sum()
    }
}

/// Build the rulebook for canonical input indices under a conv spec.
///
/// Submanifold mode: output sites equal input sites and a pair (i -> j)
/// exists iff index_i = index_j + offset with the offset centered on the
/// kernel. Strided mode: output sites are all cells floor((in + pad - k) /
/// stride) reachable with exact divisibility, deduplicated and sorted.
pub fn build_rulebook(
    indices: &[[i32; 4]],
    spatial_shape: [i32; 4],
    spec: &ConvSpec4D,
) -> Result<Rulebook, Sparse4DError> {
    spec.validate()?;
    validate_canonical(indices, spatial_shape)
        .map_err(|e| Sparse4DError::NonCanonicalIndices(e.to_string()))?;

    let offsets = kernel_offsets(spec.kernel);
    let kvol = offsets.len();

    if spec.submanifold {
        let center = [
            (spec.kernel[0] as i32 - 1) / 2,
            (spec.kernel[1] as i32 - 1) / 2,
            (spec.kernel[2] as i32 - 1) / 2,
            (spec.kernel[3] as i32 - 1) / 2,
        ];
        let map = KeyMap::from_sorted_keys(indices.iter().map(|&i| pack_index(i)));
        let mut pairs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); kvol];
        for (j, &q) in indices.iter().enumerate() {
            for (kid, k) in offsets.iter().enumerate() {
                let mut p = [0i32; 4];
                let mut inside = true;
                for a in 0..4 {
                    p[a] = q[a] + k[a] - center[a];
                    if p[a] < 0 || p[a] >= spatial_shape[a] {
                        inside = false;
                        break;
                    }
                }
                if !inside {
                    continue;
                }
                if let Some(i) = map.get(pack_index(p)) {
                    pairs[kid].push((i, j as u32));
                }
            }
        }
        for list in &mut pairs {
            list.sort_unstable_by_key(|&(i, _)| i);
        }
        Ok(Rulebook {
            spec: spec.clone(),
            pairs,
            out_indices: indices.to_vec(),
            out_shape: spatial_shape,
            in_sites: indices.len(),
        })
    } else {
        let out_shape = spec.output_shape(spatial_shape)?;
        // Pass 1: collect the active output sites.
        let mut out_keys: Vec<u64> = Vec::new();
        let mut seen = KeyMap::with_capacity(indices.len());
        for &p in indices {
            for k in &offsets {
                if let Some(q) = out_site(p, *k, spec, out_shape) {
                    let key = pack_index(q);
                    if seen.insert(key, 0) {
                        out_keys.push(key);
                    }
                }
            }
        }
        out_keys.sort_unstable();
        let out_indices: Vec<[i32; 4]> = out_keys.iter().map(|&key| unpack(key)).collect();
        let out_map = KeyMap::from_sorted_keys(out_keys.iter().copied());
        // Pass 2: fill the pair lists.
        let mut pairs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); kvol];
        for (i, &p) in indices.iter().enumerate() {
            for (kid, k) in offsets.iter().enumerate() {
                if let Some(q) = out_site(p, *k, spec, out_shape) {
                    let j = out_map.get(pack_index(q)).expect("site collected in pass 1");
                    pairs[kid].push((i as u32, j));
                }
            }
        }
        for list in &mut pairs {
            list.sort_unstable_by_key(|&(i, _)| i);
        }
        Ok(Rulebook {
            spec: spec.clone(),
            pairs,
            out_indices,
            out_shape,
            in_sites: indices.len(),
        })
    }
}

#[inline]
fn out_site(p: [i32; 4], k: [i32; 4], spec: &ConvSpec4D, out_shape: [i32; 4]) -> Option<[i32; 4]> {
    let mut q = [0i32; 4];
    for a in 0..4 {
        let num = p[a] + spec.padding[a] as i32 - k[a];
        let s = spec.stride[a] as i32;
        if num < 0 || num % s != 0 {
            return None;
        }
        q[a] = num / s;
        if q[a] >= out_shape[a] {
            return None;
        }
    }
    Some(q)
}

fn unpack(key: u64) -> [i32; 4] {
    [
        ((key >> 48) & 0xffff) as i32,
        ((key >> 32) & 0xffff) as i32,
        ((key >> 16) & 0xffff) as i32,
        (key & 0xffff) as i32,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_site_has_only_center_pair() {
        let spec = ConvSpec4D::submanifold(1, 1);
        let rb = build_rulebook(&[[4, 4, 4, 0]], [8, 8, 8, 2], &spec).unwrap();
        assert_eq!(rb.pair_count(), 1);
        let center_id = 40; // lex rank of (1,1,1,1) in a 3^4 kernel
        assert_eq!(rb.pairs()[center_id], vec![(0, 0)]);
        assert_eq!(rb.out_indices(), &[[4, 4, 4, 0]]);
    }

    #[test]
    fn adjacent_pair_along_x() {
        let spec = ConvSpec4D::submanifold(1, 1);
        let idx = [[3, 4, 4, 0], [4, 4, 4, 0]];
        let rb = build_rulebook(&idx, [8, 8, 8, 2], &spec).unwrap();
        // Two center pairs plus one pair per voxel at x-offsets +-1.
        assert_eq!(rb.pair_count(), 4);
        // Offset (+1,0,0,0) relative to output j means input i = j + (1,0,0,0):
        // kernel position (2,1,1,1) = id 2*27 + 1*9 + 1*3 + 1 = 67.
        assert_eq!(rb.pairs()[67], vec![(1, 0)]);
        // kernel position (0,1,1,1) = id 13.
        assert_eq!(rb.pairs()[13], vec![(0, 1)]);
    }

    #[test]
    fn non_canonical_input_is_rejected() {
        let spec = ConvSpec4D::submanifold(1, 1);
        let idx = [[4, 4, 4, 0], [3, 4, 4, 0]];
        assert!(build_rulebook(&idx, [8, 8, 8, 2], &spec).is_err());
    }

    #[test]
    fn strided_output_site_rule() {
        let spec = ConvSpec4D::strided(1, 1, [2, 2, 2, 1]);
        let rb = build_rulebook(&[[3, 2, 1, 0]], [8, 8, 8, 2], &spec).unwrap();
        // Sites come from q = (p + pad - k)/stride with exact divisibility.
        for q in rb.out_indices() {
            for a in 0..4 {
                assert!(q[a] >= 0 && q[a] < rb.out_shape()[a]);
            }
        }
        assert!(!rb.out_indices().is_empty());
        // Every output site must have at least one contributing pair.
        let mut hit = vec![false; rb.out_indices().len()];
        for list in rb.pairs() {
            for &(_, j) in list {
                hit[j as usize] = true;
            }
        }
        assert!(hit.iter().all(|&h| h));
    }

    #[test]
    fn submanifold_output_equals_input() {
        let spec = ConvSpec4D::submanifold(2, 2);
        let idx = [[0, 0, 0, 0], [1, 1, 1, 1], [5, 5, 5, 0]];
        let rb = build_rulebook(&idx, [8, 8, 8, 2], &spec).unwrap();
        assert_eq!(rb.out_indices(), &idx);
        assert_eq!(rb.out_shape(), [8, 8, 8, 2]);
    }
}
