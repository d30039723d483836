//! Non-learned geometric box decoder.
//!
//! Foreground points (non-ground) are clustered by connected components on a
//! 2D occupancy grid, each cluster is fitted with a minimum-area rotated
//! rectangle, classified against size templates, and optionally refined:
//! dynamic clusters orient along their motion ray and all clusters can be
//! snapped to the class template anchored at the sensor-facing extent, which
//! reconstructs full boxes from partial (single-face) views.

use crate::geom::{wrap_half_angle, Vec3};
use crate::preprocess::{CompensatedPoint, TwoFramePoints};
use crate::types::{ClassLabel, DetectionBox, TimeTag};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    /// Occupancy cell size for clustering, meters.
    pub cell: f64,
    /// Maximum point-to-point link distance, meters.
    pub radius: f64,
    /// Clusters below this size are discarded.
    pub min_points: usize,
    /// Width floor for degenerate (collinear) clusters.
    pub min_width: f64,
    pub min_height: f64,
    /// Score saturates at this point count.
    pub score_cap: usize,
    /// Replace fitted dims with the class template, anchored at the
    /// sensor-facing extent.
    pub snap_to_template: bool,
    /// Orient fast clusters along the sensor ray instead of the fitted
    /// rectangle axis (radial motion dominates single-return Doppler data).
    pub orient_dynamic_by_motion: bool,
    /// Mean |v_abs| above which a cluster counts as dynamic, m/s.
    pub dynamic_speed_gate: f64,
    /// Mean |v_abs| above which a cluster is assumed to be a vehicle and
    /// classified among car/van only.
    pub vehicle_speed_gate: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            cell: 0.4,
            radius: 0.6,
            min_points: 5,
            min_width: 0.2,
            min_height: 0.1,
            score_cap: 50,
            snap_to_template: true,
            orient_dynamic_by_motion: true,
            dynamic_speed_gate: 1.0,
            vehicle_speed_gate: 6.0,
        }
    }
}

/// Minimal per-point view consumed by the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodePoint {
    pub position: Vec3,
    pub v_abs: f64,
    pub is_ground: bool,
}

impl From<&CompensatedPoint> for DecodePoint {
    fn from(p: &CompensatedPoint) -> Self {
        DecodePoint {
            position: p.position,
            v_abs: p.v_abs,
            is_ground: p.is_ground,
        }
    }
}

/// Cluster non-ground points by connected components with single-linkage
/// distance `params.radius`, grid-accelerated. Clusters are returned in a
/// deterministic order with ascending point indices inside each cluster.
pub fn segment_foreground(points: &[DecodePoint], params: &DecodeParams) -> Vec<Vec<usize>> {
    let fg: Vec<usize> = (0..points.len()).filter(|&i| !points[i].is_ground).collect();
    if fg.is_empty() {
        return Vec::new();
    }
    let cell = params.cell.max(1e-3);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for &i in &fg {
        let p = points[i].position;
        let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
        grid.entry(key).or_default().push(i);
    }
    let reach = (params.radius / cell).ceil() as i64;
    let r2 = params.radius * params.radius;

    let mut cluster_of: HashMap<usize, usize> = HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    // Seed BFS from points in ascending index order for determinism.
    for &seed in &fg {
        if cluster_of.contains_key(&seed) {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        cluster_of.insert(seed, id);
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let p = points[i].position;
            let (cx, cy) = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            for dx in -reach..=reach {
                for dy in -reach..=reach {
                    let Some(neighbors) = grid.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in neighbors {
                        if cluster_of.contains_key(&j) {
                            continue;
                        }
                        let q = points[j].position;
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= r2 {
                            cluster_of.insert(j, id);
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters.retain(|c| c.len() >= params.min_points);
    clusters
}

/// Fit one cluster: minimum-area rotated rectangle footprint (rotating
/// calipers over the convex hull), z extent from min/max, class by
/// nearest dimension template in log space, score from the point count.
pub fn fit_box(points: &[DecodePoint], cluster: &[usize], params: &DecodeParams) -> DetectionBox {
    let xy: Vec<[f64; 2]> = cluster
        .iter()
        .map(|&i| [points[i].position[0], points[i].position[1]])
        .collect();
    let (zmin, zmax) = cluster.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &i| {
        let z = points[i].position[2];
        (acc.0.min(z), acc.1.max(z))
    });

    let rect = min_area_rect(&xy, params.min_width);
    let height = (zmax - zmin).max(params.min_height);
    let dims = [rect.length, rect.width, height];
    let class = classify_dims(dims);
    let score = (cluster.len() as f64 / params.score_cap as f64).min(1.0);
    DetectionBox {
        center: [rect.center[0], rect.center[1], (zmin + zmax) / 2.0],
        dims,
        yaw: rect.yaw,
        class,
        score,
        time_tag: TimeTag::Current,
        frame_ref: String::new(),
    }
}

struct FitRect {
    center: [f64; 2],
    length: f64,
    width: f64,
    yaw: f64,
}

/// Andrew monotone-chain convex hull; input need not be sorted.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * n);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn min_area_rect(points: &[[f64; 2]], min_width: f64) -> FitRect {
    let hull = convex_hull(points);
    if hull.is_empty() {
        return FitRect {
            center: [0.0, 0.0],
            length: min_width,
            width: min_width,
            yaw: 0.0,
        };
    }
    if hull.len() == 1 {
        return FitRect {
            center: hull[0],
            length: min_width,
            width: min_width,
            yaw: 0.0,
        };
    }
    // Degenerate or general case: test each hull edge direction (for two
    // points, the single segment direction).
    let mut best: Option<(f64, FitRect)> = None;
    let edges = if hull.len() == 2 { 1 } else { hull.len() };
    for e in 0..edges {
        let a = hull[e];
        let b = hull[(e + 1) % hull.len()];
        let dir = [b[0] - a[0], b[1] - a[1]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        if len < 1e-12 {
            continue;
        }
        let u = [dir[0] / len, dir[1] / len];
        let v = [-u[1], u[0]];
        let (mut ulo, mut uhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let pu = p[0] * u[0] + p[1] * u[1];
            let pv = p[0] * v[0] + p[1] * v[1];
            ulo = ulo.min(pu);
            uhi = uhi.max(pu);
            vlo = vlo.min(pv);
            vhi = vhi.max(pv);
        }
        let du = (uhi - ulo).max(min_width);
        let dv = (vhi - vlo).max(min_width);
        let area = du * dv;
        let (cu, cv) = ((ulo + uhi) / 2.0, (vlo + vhi) / 2.0);
        let center = [cu * u[0] + cv * v[0], cu * u[1] + cv * v[1]];
        // Length along the longer side, yaw of that side, half-circle range.
        let rect = if du >= dv {
            FitRect {
                center,
                length: du,
                width: dv,
                yaw: wrap_half_angle(u[1].atan2(u[0])),
            }
        } else {
            FitRect {
                center,
                length: dv,
                width: du,
                yaw: wrap_half_angle(v[1].atan2(v[0])),
            }
        };
        if best.as_ref().map_or(true, |(ba, _)| area < *ba) {
            best = Some((area, rect));
        }
    }
    best.expect("hull with >= 2 points yields an edge").1
}

fn classify_dims(dims: [f64; 3]) -> ClassLabel {
    let mut best = ClassLabel::Car;
    let mut best_d = f64::INFINITY;
    for class in ClassLabel::ALL {
        let t = class.dim_template();
        let mut d = 0.0;
        for k in 0..3 {
            let r = (dims[k].max(0.05)).ln() - t[k].ln();
            d += r * r;
        }
        if d < best_d {
            best_d = d;
            best = class;
        }
    }
    best
}

/// Classify a partially observed cluster. Only the sensor-facing surface is
/// observed, so the depth extent carries little signal; match the dominant
/// footprint extent and height against each class's face hypotheses
/// (long side or short side facing the sensor).
fn classify_observed(e1: f64, e2: f64, h: f64, candidates: &[ClassLabel]) -> ClassLabel {
    let mut best = candidates[0];
    let mut best_d = f64::INFINITY;
    for &class in candidates {
        let t = class.dim_template();
        let mut d = f64::INFINITY;
        for face in [t[0], t[1]] {
            let de = (e1.max(0.05).ln() - face.ln()).powi(2);
            let dh = (h.max(0.05).ln() - t[2].ln()).powi(2);
            d = d.min(de + dh);
        }
        // Observed depth exceeding the template length argues against.
        if e2 > t[0] {
            d += (e2.ln() - t[0].ln()).powi(2);
        }
        if d < best_d {
            best_d = d;
            best = class;
        }
    }
    best
}

/// Post-fit refinement: orient dynamic clusters along the sensor ray,
/// re-classify from the observed face, and snap dims to the class template.
/// Axes with a fully observed extent center the template; partially observed
/// axes anchor it at the sensor-facing edge and extend away from the sensor.
/// Snapped boxes rest on `ground_z` when available (distant objects rarely
/// expose their lowest extent to the sensor).
fn refine_box(
    bbox: DetectionBox,
    points: &[DecodePoint],
    cluster: &[usize],
    sensor_origin: Vec3,
    ground_z: Option<f64>,
    params: &DecodeParams,
) -> DetectionBox {
    let mut bbox = bbox;
    let n = cluster.len() as f64;
    let mean_v: f64 = cluster.iter().map(|&i| points[i].v_abs).sum::<f64>() / n;
    let centroid = cluster.iter().fold([0.0f64; 2], |acc, &i| {
        [
            acc[0] + points[i].position[0] / n,
            acc[1] + points[i].position[1] / n,
        ]
    });
    let dynamic = mean_v.abs() >= params.dynamic_speed_gate;

    if params.orient_dynamic_by_motion && dynamic {
        let ray = [centroid[0] - sensor_origin[0], centroid[1] - sensor_origin[1]];
        let norm = (ray[0] * ray[0] + ray[1] * ray[1]).sqrt();
        if norm > 1e-9 {
            bbox.yaw = wrap_half_angle(ray[1].atan2(ray[0]));
        }
    }

    // Extents along the (possibly re-oriented) box axes.
    let u = [bbox.yaw.cos(), bbox.yaw.sin()];
    let v = [-u[1], u[0]];
    let (mut ulo, mut uhi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in cluster {
        let p = points[i].position;
        let pu = p[0] * u[0] + p[1] * u[1];
        let pv = p[0] * v[0] + p[1] * v[1];
        ulo = ulo.min(pu);
        uhi = uhi.max(pu);
        vlo = vlo.min(pv);
        vhi = vhi.max(pv);
        zlo = zlo.min(p[2]);
        zhi = zhi.max(p[2]);
    }
    let du = (uhi - ulo).max(params.min_width);
    let dv = (vhi - vlo).max(params.min_width);
    let height = (zhi - zlo).max(params.min_height);

    if params.orient_dynamic_by_motion || params.snap_to_template {
        let candidates: &[ClassLabel] = if params.orient_dynamic_by_motion
            && mean_v.abs() >= params.vehicle_speed_gate
        {
            &[ClassLabel::Car, ClassLabel::Van]
        } else {
            &ClassLabel::ALL
        };
        bbox.class = classify_observed(du.max(dv), du.min(dv), height, candidates);
    }

    if params.orient_dynamic_by_motion && dynamic {
        bbox.dims = [du, dv, height];
        let (cu, cv) = ((ulo + uhi) / 2.0, (vlo + vhi) / 2.0);
        bbox.center = [cu * u[0] + cv * v[0], cu * u[1] + cv * v[1], (zlo + zhi) / 2.0];
    }

    if params.snap_to_template {
        let template = bbox.class.dim_template();
        // Snapping only grows boxes; oversized clusters keep their fit.
        if bbox.dims[0] <= template[0] * 1.2 && bbox.dims[1] <= template[1] * 1.2 {
            let su = sensor_origin[0] * u[0] + sensor_origin[1] * u[1];
            let sv = sensor_origin[0] * v[0] + sensor_origin[1] * v[1];
            let snap_axis = |lo: f64, hi: f64, s: f64, extent: f64| -> f64 {
                if hi - lo >= 0.7 * extent {
                    (lo + hi) / 2.0
                } else if s <= (lo + hi) / 2.0 {
                    lo + extent / 2.0
                } else {
                    hi - extent / 2.0
                }
            };
            let cu = snap_axis(ulo, uhi, su, template[0]);
            let cv = snap_axis(vlo, vhi, sv, template[1]);
            bbox.center[0] = cu * u[0] + cv * v[0];
            bbox.center[1] = cu * u[1] + cv * v[1];
            bbox.dims[0] = template[0];
            bbox.dims[1] = template[1];
            // Boxes rest on the ground estimate, falling back to the lowest
            // observed point.
            let base = ground_z.map_or(zlo, |g| g.min(zlo));
            bbox.center[2] = base + template[2] / 2.0;
            bbox.dims[2] = template[2];
        }
    }
    bbox
}

/// Median z of the ground-labeled points, when enough exist.
fn ground_height(points: &[DecodePoint]) -> Option<f64> {
    let mut zs: Vec<f64> = points
        .iter()
        .filter(|p| p.is_ground)
        .map(|p| p.position[2])
        .collect();
    if zs.len() < 20 {
        return None;
    }
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(zs[zs.len() / 2])
}

/// Decoder output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub current: Vec<DetectionBox>,
    pub future: Vec<DetectionBox>,
    pub current_clusters: usize,
    pub future_clusters: usize,
}

/// Decode both time slices of a two-frame point set.
pub fn decode_frame(
    two_frames: &TwoFramePoints,
    params: &DecodeParams,
    frame_ref: &str,
) -> DecodeOutput {
    let decode_slice = |records: &[crate::preprocess::TwoFramePoint], tag: TimeTag| {
        let pts: Vec<DecodePoint> = records
            .iter()
            .map(|r| DecodePoint {
                position: r.position,
                v_abs: r.v_abs,
                is_ground: r.is_ground,
            })
            .collect();
        let ground_z = ground_height(&pts);
        let clusters = segment_foreground(&pts, params);
        let boxes: Vec<DetectionBox> = clusters
            .iter()
            .map(|cluster| {
                let fitted = fit_box(&pts, cluster, params);
                let mut refined = refine_box(
                    fitted,
                    &pts,
                    cluster,
                    two_frames.sensor_origin,
                    ground_z,
                    params,
                );
                refined.time_tag = tag;
                refined.frame_ref = frame_ref.to_string();
                refined
            })
            .collect();
        (boxes, clusters.len())
    };
    let (current, current_clusters) = decode_slice(two_frames.current(), TimeTag::Current);
    let (future, future_clusters) = decode_slice(two_frames.future(), TimeTag::Future);
    DecodeOutput {
        current,
        future,
        current_clusters,
        future_clusters,
    }
}
