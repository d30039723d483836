//! Point-cloud preprocessing: ground extraction, relative-to-absolute
//! velocity compensation, and virtual future-point generation.
//!
//! The compensation path follows the rule-based recipe: cluster the dominant
//! ground surface, average its relative radial velocities, and subtract that
//! mean from every point. An alternative per-ray projection using an ego
//! velocity estimate is available behind [`CompensationMethod`].

use crate::geom::{dot3, norm3, normalize3, scale3, sub3, Vec3};
use crate::sim::PointCloudFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug)]
pub enum PreprocessError {
    /// Fewer plane inliers than the configured minimum; callers fall back to
    /// zero compensation.
    InsufficientGroundEvidence { inliers: usize, needed: usize },
    InvalidParams(String),
}

impl fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreprocessError::InsufficientGroundEvidence { inliers, needed } => {
                write!(f, "insufficient ground evidence: {inliers} inliers, {needed} needed")
            }
            PreprocessError::InvalidParams(msg) => write!(f, "invalid preprocess params: {msg}"),
        }
    }
}

impl std::error::Error for PreprocessError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundParams {
    /// Half-width of the height gate around the coarse ground estimate.
    pub height_gate: f64,
    /// Inlier distance tolerance for the plane consensus.
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub ransac_iters: usize,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            height_gate: 0.3,
            inlier_tol: 0.15,
            min_inliers: 50,
            ransac_iters: 50,
            seed: 0x5eed,
        }
    }
}

/// Fitted ground plane z = a*x + b*y + c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GroundPlane {
    /// Vertical distance of a point to the plane. The plane is near-horizontal
    /// after the height gate, so vertical distance is a good proxy for
    /// orthogonal distance.
    pub fn residual(&self, p: Vec3) -> f64 {
        p[2] - (self.a * p[0] + self.b * p[1] + self.c)
    }
}

/// Mark points lying on the dominant ground surface.
///
/// Coarse height gate around a low-percentile z estimate, then a randomized
/// plane consensus, then inlier marking over the full frame.
pub fn extract_ground(
    frame: &PointCloudFrame,
    params: &GroundParams,
) -> Result<(Vec<bool>, GroundPlane), PreprocessError> {
    if params.inlier_tol <= 0.0 || params.height_gate <= 0.0 {
        return Err(PreprocessError::InvalidParams(
            "height_gate and inlier_tol must be > 0".into(),
        ));
    }
    let n = frame.points.len();
    if n < params.min_inliers.max(3) {
        return Err(PreprocessError::InsufficientGroundEvidence {
            inliers: 0,
            needed: params.min_inliers,
        });
    }

    // Coarse ground height: low percentile of z.
    let mut zs: Vec<f64> = frame.points.iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let z_est = zs[(n as f64 * 0.1) as usize];

    let gated: Vec<usize> = (0..n)
        .filter(|&i| (frame.points[i].z - z_est).abs() <= params.height_gate)
        .collect();
    if gated.len() < 3 {
        return Err(PreprocessError::InsufficientGroundEvidence {
            inliers: gated.len(),
            needed: params.min_inliers,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best_plane: Option<GroundPlane> = None;
    let mut best_inliers = 0usize;
    for _ in 0..params.ransac_iters.max(1) {
        let i0 = gated[rng.gen_range(0..gated.len())];
        let i1 = gated[rng.gen_range(0..gated.len())];
        let i2 = gated[rng.gen_range(0..gated.len())];
        let Some(plane) = plane_through(
            frame.points[i0].position(),
            frame.points[i1].position(),
            frame.points[i2].position(),
        ) else {
            continue;
        };
        let inliers = gated
            .iter()
            .filter(|&&i| plane.residual(frame.points[i].position()).abs() <= params.inlier_tol)
            .count();
        if inliers > best_inliers {
            best_inliers = inliers;
            best_plane = Some(plane);
        }
    }

    let Some(plane) = best_plane else {
        return Err(PreprocessError::InsufficientGroundEvidence {
            inliers: 0,
            needed: params.min_inliers,
        });
    };

    // Least-squares refit on the consensus inliers.
    let inlier_idx: Vec<usize> = gated
        .iter()
        .copied()
        .filter(|&i| plane.residual(frame.points[i].position()).abs() <= params.inlier_tol)
        .collect();
    let plane = fit_plane_lsq(frame, &inlier_idx).unwrap_or(plane);

    let mask: Vec<bool> = frame
        .points
        .iter()
        .map(|p| plane.residual(p.position()).abs() <= params.inlier_tol)
        .collect();
    let count = mask.iter().filter(|&&m| m).count();
    if count < params.min_inliers {
        return Err(PreprocessError::InsufficientGroundEvidence {
            inliers: count,
            needed: params.min_inliers,
        });
    }
    Ok((mask, plane))
}

fn plane_through(p0: Vec3, p1: Vec3, p2: Vec3) -> Option<GroundPlane> {
    // Solve z = a*x + b*y + c through three points.
    let ax = p1[0] - p0[0];
    let ay = p1[1] - p0[1];
    let az = p1[2] - p0[2];
    let bx = p2[0] - p0[0];
    let by = p2[1] - p0[1];
    let bz = p2[2] - p0[2];
    let det = ax * by - ay * bx;
    if det.abs() < 1e-9 {
        return None;
    }
    let a = (az * by - ay * bz) / det;
    let b = (ax * bz - az * bx) / det;
    let c = p0[2] - a * p0[0] - b * p0[1];
    Some(GroundPlane { a, b, c })
}

fn fit_plane_lsq(frame: &PointCloudFrame, idx: &[usize]) -> Option<GroundPlane> {
    if idx.len() < 3 {
        return None;
    }
    // Normal equations for z = a*x + b*y + c, centered for conditioning.
    let n = idx.len() as f64;
    let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
    for &i in idx {
        let p = &frame.points[i];
        mx += p.x;
        my += p.y;
        mz += p.z;
    }
    mx /= n;
    my /= n;
    mz /= n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in idx {
        let p = &frame.points[i];
        let dx = p.x - mx;
        let dy = p.y - my;
        let dz = p.z - mz;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-9 {
        return None;
    }
    let a = (sxz * syy - sxy * syz) / det;
    let b = (sxx * syz - sxy * sxz) / det;
    let c = mz - a * mx - b * my;
    Some(GroundPlane { a, b, c })
}

/// How absolute velocity is recovered from relative velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationMethod {
    /// Subtract the mean relative velocity of ground points (default).
    GroundMean,
    /// Add the projection of an ego-velocity estimate onto each ray.
    EgoProjection,
}

impl Default for CompensationMethod {
    fn default() -> Self {
        CompensationMethod::GroundMean
    }
}

/// A point with both relative and compensated absolute radial velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedPoint {
    pub position: Vec3,
    pub intensity: f64,
    pub v_rel: f64,
    pub v_abs: f64,
    pub is_ground: bool,
}

/// Audit record of one compensation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationInfo {
    pub ground_mean_v: f64,
    pub ground_count: usize,
    /// True when no ground evidence was available and zero compensation was
    /// applied instead.
    pub degraded: bool,
    pub method: CompensationMethod,
}

/// Subtract the ground-mean relative velocity from every point.
/// An empty mask never aborts; it yields zero compensation with the degraded
/// flag set.
pub fn compensate_velocity(
    frame: &PointCloudFrame,
    ground_mask: &[bool],
) -> (Vec<CompensatedPoint>, CompensationInfo) {
    assert_eq!(frame.points.len(), ground_mask.len(), "mask must align with points");
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (p, &g) in frame.points.iter().zip(ground_mask) {
        if g {
            sum += p.v;
            count += 1;
        }
    }
    let (mean, degraded) = if count == 0 {
        (0.0, true)
    } else {
        (sum / count as f64, false)
    };
    let points = frame
        .points
        .iter()
        .zip(ground_mask)
        .map(|(p, &g)| CompensatedPoint {
            position: p.position(),
            intensity: p.intensity,
            v_rel: p.v,
            v_abs: p.v - mean,
            is_ground: g,
        })
        .collect();
    (
        points,
        CompensationInfo {
            ground_mean_v: mean,
            ground_count: count,
            degraded,
            method: CompensationMethod::GroundMean,
        },
    )
}

/// Per-ray variant: v_abs = v_rel + ego_v . d for a known ego velocity.
pub fn compensate_velocity_ego(
    frame: &PointCloudFrame,
    ground_mask: &[bool],
    ego_velocity: [f64; 2],
) -> (Vec<CompensatedPoint>, CompensationInfo) {
    assert_eq!(frame.points.len(), ground_mask.len(), "mask must align with points");
    let ev = [ego_velocity[0], ego_velocity[1], 0.0];
    let points = frame
        .points
        .iter()
        .zip(ground_mask)
        .map(|(p, &g)| {
            let d = normalize3(sub3(p.position(), frame.sensor_origin));
            CompensatedPoint {
                position: p.position(),
                intensity: p.intensity,
                v_rel: p.v,
                v_abs: p.v + dot3(ev, d),
                is_ground: g,
            }
        })
        .collect();
    (
        points,
        CompensationInfo {
            ground_mean_v: 0.0,
            ground_count: ground_mask.iter().filter(|&&g| g).count(),
            degraded: false,
            method: CompensationMethod::EgoProjection,
        },
    )
}

/// One record of the virtual two-frame set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFramePoint {
    pub position: Vec3,
    pub intensity: f64,
    pub v_rel: f64,
    pub v_abs: f64,
    /// 0 = current frame, 1 = virtual future frame.
    pub t_label: u8,
    pub is_ground: bool,
}

/// The current frame plus its extrapolated virtual future twin.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFramePoints {
    /// All t_label = 0 records first (input order), then their t_label = 1
    /// twins in the same order.
    pub records: Vec<TwoFramePoint>,
    pub delta_t: f64,
    pub sensor_origin: Vec3,
    /// Points coincident with the sensor origin that were dropped.
    pub dropped_at_origin: usize,
}

impl TwoFramePoints {
    pub fn current(&self) -> &[TwoFramePoint] {
        &self.records[..self.records.len() / 2]
    }

    pub fn future(&self) -> &[TwoFramePoint] {
        &self.records[self.records.len() / 2..]
    }
}

/// Extrapolate every point along its sensor ray by v_abs * delta_t.
///
/// For a point x with ray direction d = (x - o)/|x - o| the virtual twin is
/// x + v_abs * delta_t * d. Points closer than 1e-9 m to the origin are
/// dropped and counted. Zero-velocity points are copied bit-identically.
pub fn generate_virtual_future(
    points: &[CompensatedPoint],
    delta_t: f64,
    sensor_origin: Vec3,
) -> Result<TwoFramePoints, PreprocessError> {
    if delta_t <= 0.0 {
        return Err(PreprocessError::InvalidParams("delta_t must be > 0".into()));
    }
    let mut current = Vec::with_capacity(points.len());
    let mut future = Vec::with_capacity(points.len());
    let mut dropped = 0usize;
    for p in points {
        let offset = sub3(p.position, sensor_origin);
        let dist = norm3(offset);
        if dist < 1e-9 {
            dropped += 1;
            continue;
        }
        let twin_pos = if p.v_abs == 0.0 {
            p.position
        } else {
            let dir = scale3(offset, 1.0 / dist);
            let step = p.v_abs * delta_t;
            [
                p.position[0] + step * dir[0],
                p.position[1] + step * dir[1],
                p.position[2] + step * dir[2],
            ]
        };
        current.push(TwoFramePoint {
            position: p.position,
            intensity: p.intensity,
            v_rel: p.v_rel,
            v_abs: p.v_abs,
            t_label: 0,
            is_ground: p.is_ground,
        });
        future.push(TwoFramePoint {
            position: twin_pos,
            intensity: p.intensity,
            v_rel: p.v_rel,
            v_abs: p.v_abs,
            t_label: 1,
            is_ground: p.is_ground,
        });
    }
    let mut records = current;
    records.append(&mut future);
    Ok(TwoFramePoints {
        records,
        delta_t,
        sensor_origin,
        dropped_at_origin: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LidarModel, PointCloudFrame, PointRecord, PointSource};
    use crate::types::Pose2;

    fn frame_from(points: Vec<PointRecord>) -> PointCloudFrame {
        let n = points.len();
        PointCloudFrame {
            points,
            sensor_origin: [0.0; 3],
            timestamp: 0.0,
            ego_pose: Pose2::identity(),
            ego_velocity_gt: [0.0, 0.0],
            lidar: LidarModel::default(),
            sources: vec![PointSource::Ground; n],
        }
    }

    fn pt(x: f64, y: f64, z: f64, v: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            intensity: 0.5,
            v,
        }
    }

    #[test]
    fn empty_frame_reports_insufficient_evidence() {
        let frame = frame_from(vec![]);
        match extract_ground(&frame, &GroundParams::default()) {
            Err(PreprocessError::InsufficientGroundEvidence { inliers, .. }) => {
                assert_eq!(inliers, 0)
            }
            other => panic!("expected insufficient evidence, got {other:?}"),
        }
    }

    #[test]
    fn full_plane_is_fully_marked() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(pt(i as f64, j as f64, -1.8, 0.0));
            }
        }
        let frame = frame_from(pts);
        let (mask, plane) = extract_ground(&frame, &GroundParams::default()).unwrap();
        assert!(mask.iter().all(|&m| m));
        assert!(plane.a.abs() < 1e-9 && plane.b.abs() < 1e-9);
        assert!((plane.c + 1.8).abs() < 1e-9);
    }

    #[test]
    fn plane_plus_object_separates() {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..10 {
                pts.push(pt(5.0 + i as f64, j as f64 - 5.0, -1.8, 0.0));
            }
        }
        let ground_count = pts.len();
        for i in 0..40 {
            pts.push(pt(10.0, 0.0, -1.0 + 0.02 * i as f64, 3.0));
        }
        let frame = frame_from(pts);
        let (mask, _) = extract_ground(&frame, &GroundParams::default()).unwrap();
        let marked_ground = mask[..ground_count].iter().filter(|&&m| m).count();
        assert!(marked_ground as f64 >= 0.95 * ground_count as f64);
        assert!(mask[ground_count..].iter().all(|&m| !m));
    }

    #[test]
    fn mean_subtraction_matches_example() {
        // Ground mean -10, car point -4 -> car v_abs = +6.
        let mut pts = vec![];
        for i in 0..10 {
            pts.push(pt(5.0 + i as f64, 0.0, -1.8, -10.0));
        }
        pts.push(pt(10.0, 2.0, 0.0, -4.0));
        let frame = frame_from(pts);
        let mut mask = vec![true; 11];
        mask[10] = false;
        let (out, info) = compensate_velocity(&frame, &mask);
        assert!((info.ground_mean_v + 10.0).abs() < 1e-12);
        assert!((out[10].v_abs - 6.0).abs() < 1e-12);
        assert!(!info.degraded);
    }

    #[test]
    fn empty_mask_degrades_to_zero_compensation() {
        let frame = frame_from(vec![pt(1.0, 0.0, 0.0, -3.0)]);
        let (out, info) = compensate_velocity(&frame, &[false]);
        assert!(info.degraded);
        assert_eq!(out[0].v_abs, out[0].v_rel);
    }

    #[test]
    fn constant_offset_cancels() {
        let mut pts = vec![];
        for i in 0..50 {
            pts.push(pt(5.0 + i as f64, 1.0, -1.8, -8.0 + 0.01 * i as f64));
        }
        let frame = frame_from(pts.clone());
        let mask = vec![true; 50];
        let (base, _) = compensate_velocity(&frame, &mask);

        let shifted: Vec<PointRecord> = pts
            .iter()
            .map(|p| PointRecord { v: p.v + 17.5, ..*p })
            .collect();
        let frame2 = frame_from(shifted);
        let (moved, _) = compensate_velocity(&frame2, &mask);
        for (a, b) in base.iter().zip(&moved) {
            assert!((a.v_abs - b.v_abs).abs() < 1e-9);
        }
    }

    #[test]
    fn compensation_is_permutation_invariant() {
        let pts: Vec<PointRecord> = (0..40)
            .map(|i| pt(1.0 + i as f64, 0.0, -1.8, -5.0 - (i % 7) as f64 * 0.1))
            .collect();
        let frame = frame_from(pts.clone());
        let mask = vec![true; 40];
        let (a, ia) = compensate_velocity(&frame, &mask);

        let mut rev = pts;
        rev.reverse();
        let frame_rev = frame_from(rev);
        let (b, ib) = compensate_velocity(&frame_rev, &mask);
        assert!((ia.ground_mean_v - ib.ground_mean_v).abs() < 1e-12);
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert!((x.v_abs - y.v_abs).abs() < 1e-12);
        }
    }

    fn comp(x: f64, y: f64, z: f64, v_abs: f64) -> CompensatedPoint {
        CompensatedPoint {
            position: [x, y, z],
            intensity: 0.5,
            v_rel: v_abs,
            v_abs,
            is_ground: false,
        }
    }

    #[test]
    fn extrapolation_matches_direct_evaluation() {
        let out = generate_virtual_future(&[comp(10.0, 0.0, 0.0, 6.0)], 0.5, [0.0; 3]).unwrap();
        let twin = out.future()[0];
        assert!((twin.position[0] - 13.0).abs() < 1e-12);
        assert!(twin.position[1].abs() < 1e-12);

        let inward = generate_virtual_future(&[comp(10.0, 0.0, 0.0, -6.0)], 0.5, [0.0; 3]).unwrap();
        assert!((inward.future()[0].position[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_velocity_twin_is_bit_identical() {
        let p = comp(3.25, -7.5, 1.125, 0.0);
        let out = generate_virtual_future(&[p], 2.0, [0.0; 3]).unwrap();
        assert_eq!(out.future()[0].position, p.position);
    }

    #[test]
    fn origin_points_are_dropped_and_counted() {
        let pts = vec![comp(0.0, 0.0, 0.0, 1.0), comp(5.0, 0.0, 0.0, 1.0)];
        let out = generate_virtual_future(&pts, 0.1, [0.0; 3]).unwrap();
        assert_eq!(out.dropped_at_origin, 1);
        assert_eq!(out.current().len(), 1);
        assert_eq!(out.future().len(), 1);
    }

    #[test]
    fn extrapolation_composes_along_the_ray() {
        let p = comp(4.0, 3.0, -1.0, 2.5);
        let once = generate_virtual_future(&[p], 0.7, [0.0; 3]).unwrap();
        let twin = once.future()[0];
        let again = generate_virtual_future(
            &[CompensatedPoint {
                position: twin.position,
                intensity: twin.intensity,
                v_rel: twin.v_rel,
                v_abs: twin.v_abs,
                is_ground: twin.is_ground,
            }],
            0.3,
            [0.0; 3],
        )
        .unwrap();
        let composed = again.future()[0].position;
        let direct = generate_virtual_future(&[p], 1.0, [0.0; 3]).unwrap().future()[0].position;
        for k in 0..3 {
            assert!((composed[k] - direct[k]).abs() < 1e-9);
        }
    }
}
