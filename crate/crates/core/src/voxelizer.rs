//! 4D voxelization of the two-frame point set.
//!
//! Points map to (ix, iy, iz, it) cells by floor division; per-voxel features
//! are the mean of the configured channel vector, the mean offset from the
//! voxel center, and a capped point count. Aggregation order is canonicalized
//! so the output is bit-identical under input permutation.

use crate::preprocess::TwoFramePoints;
use crate::sparse4d::SparseTensor4D;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug)]
pub enum VoxelizerError {
    InvalidConfig(String),
    ShapeMismatch { expected: usize, actual: usize },
}

impl fmt::Display for VoxelizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoxelizerError::InvalidConfig(msg) => write!(f, "invalid voxel grid config: {msg}"),
            VoxelizerError::ShapeMismatch { expected, actual } => {
                write!(f, "feature shape mismatch: expected {expected} inputs, got {actual}")
            }
        }
    }
}

impl std::error::Error for VoxelizerError {}

/// Which point channels feed the per-voxel feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Xyz,
    Xyzi,
    XyziRelv,
    XyziAbsv,
}

impl ChannelMode {
    pub fn point_channels(&self) -> usize {
        match self {
            ChannelMode::Xyz => 3,
            ChannelMode::Xyzi => 4,
            ChannelMode::XyziRelv | ChannelMode::XyziAbsv => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoxelGridConfig {
    /// Cell size per spatial axis, meters.
    pub voxel_size: [f64; 3],
    /// Grid extents (Nx, Ny, Nz, Nt); Nt must be 2 for the two-frame input.
    pub grid_shape: [usize; 4],
    /// World position of the grid minimum corner.
    pub origin: [f64; 3],
    pub channel_mode: ChannelMode,
    /// Point-count feature saturates at this cap before normalization.
    pub count_cap: u32,
}

impl Default for VoxelGridConfig {
    fn default() -> Self {
        // Forward 100-degree sector: x in [0, 151.04], y centered, z above ground.
        Self {
            voxel_size: [0.08, 0.08, 0.25],
            grid_shape: [1888, 1280, 64, 2],
            origin: [0.0, -51.2, -2.0],
            channel_mode: ChannelMode::XyziAbsv,
            count_cap: 32,
        }
    }
}

impl VoxelGridConfig {
    /// Pillar-style grid matching the single-height-cell encoder setup.
    pub fn pillar_default() -> Self {
        Self {
            voxel_size: [0.32, 0.32, 16.0],
            grid_shape: [472, 320, 1, 2],
            origin: [0.0, -51.2, -2.0],
            channel_mode: ChannelMode::XyziAbsv,
            count_cap: 32,
        }
    }

    pub fn validate(&self) -> Result<(), VoxelizerError> {
        if self.voxel_size.iter().any(|&s| s <= 0.0) {
            return Err(VoxelizerError::InvalidConfig("voxel sizes must be > 0".into()));
        }
        if self.grid_shape.iter().any(|&n| n == 0) {
            return Err(VoxelizerError::InvalidConfig("grid shape components must be >= 1".into()));
        }
        if self.grid_shape[3] != 2 {
            return Err(VoxelizerError::InvalidConfig("Nt must be 2 for two-frame input".into()));
        }
        if self.grid_shape.iter().any(|&n| n > u16::MAX as usize) {
            return Err(VoxelizerError::InvalidConfig("grid axes are capped at 65536".into()));
        }
        if self.count_cap == 0 {
            return Err(VoxelizerError::InvalidConfig("count_cap must be >= 1".into()));
        }
        Ok(())
    }

    /// Feature width produced by [`voxelize_4d`]: channel vector mean, mean
    /// offset from voxel center, normalized count.
    pub fn feature_width(&self) -> usize {
        self.channel_mode.point_channels() + 4
    }
}

/// Sparse 4D voxel set with per-voxel aggregate features and point counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxel4DSet {
    pub tensor: SparseTensor4D,
    pub point_counts: Vec<u32>,
    pub points_dropped: usize,
    pub points_in: usize,
}

/// Voxelize the two-frame point set into a canonical sparse 4D voxel set.
pub fn voxelize_4d(points: &TwoFramePoints, cfg: &VoxelGridConfig) -> Result<Voxel4DSet, VoxelizerError> {
    cfg.validate()?;
    let c_pt = cfg.channel_mode.point_channels();
    let c_out = cfg.feature_width();

    // Bin points, keeping the record index for canonical within-voxel order.
    let mut bins: HashMap<u64, Vec<u32>> = HashMap::new();
    let mut dropped = 0usize;
    for (ri, rec) in points.records.iter().enumerate() {
        let mut idx = [0i64; 4];
        let mut ok = true;
        for a in 0..3 {
            let q = ((rec.position[a] - cfg.origin[a]) / cfg.voxel_size[a]).floor();
            if !q.is_finite() || q < 0.0 || q >= cfg.grid_shape[a] as f64 {
                ok = false;
                break;
            }
            idx[a] = q as i64;
        }
        idx[3] = rec.t_label as i64;
        if !ok {
            dropped += 1;
            continue;
        }
        let key = pack4(idx);
        bins.entry(key).or_default().push(ri as u32);
    }

    let mut keys: Vec<u64> = bins.keys().copied().collect();
    keys.sort_unstable();

    let mut indices = Vec::with_capacity(keys.len());
    let mut features = Vec::with_capacity(keys.len() * c_out);
    let mut counts = Vec::with_capacity(keys.len());

    for key in keys {
        let rows = bins.get_mut(&key).unwrap();
        // Canonical within-voxel order: total order on the record bytes, so
        // the accumulated sums do not depend on input permutation.
        rows.sort_unstable_by(|&a, &b| record_key(points, a).cmp(&record_key(points, b)));
        let idx = unpack4(key);
        let n = rows.len() as f64;

        let mut chan_sum = [0.0f64; 5];
        let mut off_sum = [0.0f64; 3];
        for &ri in rows.iter() {
            let rec = &points.records[ri as usize];
            chan_sum[0] += rec.position[0];
            chan_sum[1] += rec.position[1];
            chan_sum[2] += rec.position[2];
            match cfg.channel_mode {
                ChannelMode::Xyz => {}
                ChannelMode::Xyzi => chan_sum[3] += rec.intensity,
                ChannelMode::XyziRelv => {
                    chan_sum[3] += rec.intensity;
                    chan_sum[4] += rec.v_rel;
                }
                ChannelMode::XyziAbsv => {
                    chan_sum[3] += rec.intensity;
                    chan_sum[4] += rec.v_abs;
                }
            }
            for a in 0..3 {
                let center = cfg.origin[a] + (idx[a] as f64 + 0.5) * cfg.voxel_size[a];
                off_sum[a] += rec.position[a] - center;
            }
        }

        for c in 0..c_pt {
            features.push((chan_sum[c] / n) as f32);
        }
        for a in 0..3 {
            features.push((off_sum[a] / n) as f32);
        }
        let capped = (rows.len() as u32).min(cfg.count_cap);
        features.push(capped as f32 / cfg.count_cap as f32);

        indices.push([idx[0] as i32, idx[1] as i32, idx[2] as i32, idx[3] as i32]);
        counts.push(rows.len() as u32);
    }

    let shape = [
        cfg.grid_shape[0] as i32,
        cfg.grid_shape[1] as i32,
        cfg.grid_shape[2] as i32,
        cfg.grid_shape[3] as i32,
    ];
    let tensor = SparseTensor4D::new(indices, features, c_out, shape)
        .expect("voxelizer output is canonical by construction");
    Ok(Voxel4DSet {
        tensor,
        point_counts: counts,
        points_dropped: dropped,
        points_in: points.records.len(),
    })
}

fn pack4(idx: [i64; 4]) -> u64 {
    ((idx[0] as u64) << 48) | ((idx[1] as u64) << 32) | ((idx[2] as u64) << 16) | idx[3] as u64
}

fn unpack4(key: u64) -> [i64; 4] {
    [
        ((key >> 48) & 0xffff) as i64,
        ((key >> 32) & 0xffff) as i64,
        ((key >> 16) & 0xffff) as i64,
        (key & 0xffff) as i64,
    ]
}

fn record_key(points: &TwoFramePoints, ri: u32) -> [u64; 6] {
    let r = &points.records[ri as usize];
    [
        r.position[0].to_bits(),
        r.position[1].to_bits(),
        r.position[2].to_bits(),
        r.intensity.to_bits(),
        r.v_abs.to_bits(),
        r.v_rel.to_bits(),
    ]
}

/// Affine feature projection plus rectification: the forward-only VFE layer.
/// Weights are row-major (out x in).
pub fn project_features(
    voxels: &Voxel4DSet,
    weights: &[f32],
    bias: &[f32],
    out_channels: usize,
) -> Result<Voxel4DSet, VoxelizerError> {
    let c_in = voxels.tensor.channels();
    if weights.len() != out_channels * c_in {
        return Err(VoxelizerError::ShapeMismatch {
            expected: out_channels * c_in,
            actual: weights.len(),
        });
    }
    if bias.len() != out_channels {
        return Err(VoxelizerError::ShapeMismatch {
            expected: out_channels,
            actual: bias.len(),
        });
    }
    let n = voxels.tensor.len();
    let feats = voxels.tensor.features();
    let mut out = Vec::with_capacity(n * out_channels);
    for row in 0..n {
        let x = &feats[row * c_in..(row + 1) * c_in];
        for o in 0..out_channels {
            let mut acc = bias[o] as f64;
            let w = &weights[o * c_in..(o + 1) * c_in];
            for (xi, wi) in x.iter().zip(w) {
                acc += *xi as f64 * *wi as f64;
            }
            out.push(acc.max(0.0) as f32);
        }
    }
    let tensor = SparseTensor4D::new(
        voxels.tensor.indices().to_vec(),
        out,
        out_channels,
        voxels.tensor.spatial_shape(),
    )
    .expect("projection preserves canonical indices");
    Ok(Voxel4DSet {
        tensor,
        point_counts: voxels.point_counts.clone(),
        points_dropped: voxels.points_dropped,
        points_in: voxels.points_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{TwoFramePoint, TwoFramePoints};

    fn two_frame(records: Vec<TwoFramePoint>) -> TwoFramePoints {
        TwoFramePoints {
            records,
            delta_t: 0.5,
            sensor_origin: [0.0; 3],
            dropped_at_origin: 0,
        }
    }

    fn rec(x: f64, y: f64, z: f64, i: f64, v: f64, t: u8) -> TwoFramePoint {
        TwoFramePoint {
            position: [x, y, z],
            intensity: i,
            v_rel: v,
            v_abs: v,
            t_label: t,
            is_ground: false,
        }
    }

    fn small_cfg() -> VoxelGridConfig {
        VoxelGridConfig {
            voxel_size: [0.08, 0.08, 0.25],
            grid_shape: [32, 32, 8, 2],
            origin: [0.0, 0.0, 0.0],
            channel_mode: ChannelMode::XyziAbsv,
            count_cap: 32,
        }
    }

    #[test]
    fn floor_division_indexing() {
        let pts = two_frame(vec![rec(0.04, 0.04, 0.1, 0.5, 0.0, 0)]);
        let out = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert_eq!(out.tensor.indices(), &[[0, 0, 0, 0]]);
    }

    #[test]
    fn mean_intensity_in_shared_voxel() {
        let pts = two_frame(vec![
            rec(0.01, 0.01, 0.1, 0.2, 0.0, 0),
            rec(0.05, 0.05, 0.1, 0.4, 0.0, 0),
        ]);
        let out = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert_eq!(out.tensor.len(), 1);
        // Channels are x, y, z, i, v, off_x, off_y, off_z, count.
        let f = out.tensor.feature_row(0);
        assert!((f[3] - 0.3).abs() < 1e-6);
        assert_eq!(out.point_counts, vec![2]);
    }

    #[test]
    fn t_label_maps_to_fourth_index() {
        let pts = two_frame(vec![
            rec(0.04, 0.04, 0.1, 0.5, 1.0, 0),
            rec(0.20, 0.04, 0.1, 0.5, 1.0, 1),
        ]);
        let out = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert_eq!(out.tensor.indices(), &[[0, 0, 0, 0], [2, 0, 0, 1]]);
    }

    #[test]
    fn out_of_range_points_are_dropped_and_counted() {
        let pts = two_frame(vec![
            rec(-0.5, 0.0, 0.1, 0.5, 0.0, 0),
            rec(0.04, 0.04, 0.1, 0.5, 0.0, 0),
            rec(100.0, 0.0, 0.1, 0.5, 0.0, 0),
        ]);
        let out = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert_eq!(out.points_dropped, 2);
        let total: u32 = out.point_counts.iter().sum();
        assert_eq!(total as usize + out.points_dropped, out.points_in);
    }

    #[test]
    fn fully_out_of_range_yields_empty_set() {
        let pts = two_frame(vec![rec(-5.0, 0.0, 0.1, 0.5, 0.0, 0)]);
        let out = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert_eq!(out.tensor.len(), 0);
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let mut records = Vec::new();
        for i in 0..200 {
            let x = (i as f64 * 0.37) % 2.0;
            let y = (i as f64 * 0.73) % 2.0;
            let z = (i as f64 * 0.11) % 1.5;
            records.push(rec(x, y, z, (i % 10) as f64 / 10.0, (i % 5) as f64, (i % 2) as u8));
        }
        let fwd = voxelize_4d(&two_frame(records.clone()), &small_cfg()).unwrap();
        records.reverse();
        let rev = voxelize_4d(&two_frame(records), &small_cfg()).unwrap();
        assert_eq!(fwd.tensor, rev.tensor);
        assert_eq!(fwd.point_counts, rev.point_counts);
    }

    #[test]
    fn relv_and_absv_differ_only_in_velocity_channel() {
        let records = vec![
            TwoFramePoint {
                position: [0.1, 0.1, 0.1],
                intensity: 0.7,
                v_rel: -9.0,
                v_abs: 1.0,
                t_label: 0,
                is_ground: false,
            },
            TwoFramePoint {
                position: [0.9, 0.9, 0.4],
                intensity: 0.2,
                v_rel: -8.0,
                v_abs: 2.0,
                t_label: 1,
                is_ground: false,
            },
        ];
        let mut cfg = small_cfg();
        cfg.channel_mode = ChannelMode::XyziRelv;
        let rel = voxelize_4d(&two_frame(records.clone()), &cfg).unwrap();
        cfg.channel_mode = ChannelMode::XyziAbsv;
        let abs = voxelize_4d(&two_frame(records), &cfg).unwrap();
        assert_eq!(rel.tensor.indices(), abs.tensor.indices());
        for row in 0..rel.tensor.len() {
            let fr = rel.tensor.feature_row(row);
            let fa = abs.tensor.feature_row(row);
            for c in 0..fr.len() {
                if c == 4 {
                    assert_ne!(fr[c], fa[c]);
                } else {
                    assert_eq!(fr[c], fa[c]);
                }
            }
        }
    }

    #[test]
    fn identity_projection_preserves_nonnegative_features() {
        let pts = two_frame(vec![rec(0.04, 0.04, 0.1, 0.5, 2.0, 0)]);
        let vox = voxelize_4d(&pts, &small_cfg()).unwrap();
        let c = vox.tensor.channels();
        let mut eye = vec![0.0f32; c * c];
        for i in 0..c {
            eye[i * c + i] = 1.0;
        }
        let out = project_features(&vox, &eye, &vec![0.0; c], c).unwrap();
        // The mean-offset channels can be negative and are clamped; compare
        // the nonnegative channels only.
        let fin = vox.tensor.feature_row(0);
        let fout = out.tensor.feature_row(0);
        for i in 0..c {
            if fin[i] >= 0.0 {
                assert!((fin[i] - fout[i]).abs() < 1e-6);
            } else {
                assert_eq!(fout[i], 0.0);
            }
        }
    }

    #[test]
    fn zero_projection_gives_zero_features() {
        let pts = two_frame(vec![rec(0.04, 0.04, 0.1, 0.5, 2.0, 0)]);
        let vox = voxelize_4d(&pts, &small_cfg()).unwrap();
        let c = vox.tensor.channels();
        let out = project_features(&vox, &vec![0.0; 8 * c], &vec![0.0; 8], 8).unwrap();
        assert!(out.tensor.features().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn projection_matches_dense_matrix_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(rec(
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..1.5),
                rng.gen_range(0.0..1.0),
                rng.gen_range(-5.0..5.0),
                (i % 2) as u8,
            ));
        }
        let vox = voxelize_4d(&two_frame(records), &small_cfg()).unwrap();
        let c_in = vox.tensor.channels();
        let c_out = 6;
        let weights: Vec<f32> = (0..c_in * c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f32> = (0..c_out).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let out = project_features(&vox, &weights, &bias, c_out).unwrap();
        for row in 0..vox.tensor.len() {
            let x = vox.tensor.feature_row(row);
            for o in 0..c_out {
                let mut acc = bias[o] as f64;
                for i in 0..c_in {
                    acc += x[i] as f64 * weights[o * c_in + i] as f64;
                }
                let expect = acc.max(0.0) as f32;
                assert!((out.tensor.feature_row(row)[o] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn projection_shape_mismatch_is_rejected() {
        let pts = two_frame(vec![rec(0.04, 0.04, 0.1, 0.5, 2.0, 0)]);
        let vox = voxelize_4d(&pts, &small_cfg()).unwrap();
        assert!(project_features(&vox, &[0.0; 3], &[0.0; 2], 2).is_err());
    }
}
