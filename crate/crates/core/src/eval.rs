//! KITTI-style evaluation: rotated 3D IoU via convex polygon clipping, greedy
//! score-ordered matching, and average precision at 40 recall positions.

use crate::geom::Pose2;
use crate::types::{ClassLabel, DetectionBox};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub enum EvalError {
    MissingFrames(Vec<String>),
    InvalidConfig(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MissingFrames(frames) => {
                write!(f, "detections missing for frames: {}", frames.join(", "))
            }
            EvalError::InvalidConfig(msg) => write!(f, "invalid eval config: {msg}"),
        }
    }
}

impl std::error::Error for EvalError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Per-class IoU thresholds.
    pub iou_thresholds: BTreeMap<ClassLabel, f64>,
    pub recall_positions: usize,
    /// Standard task only: ground truth needs at least this many points.
    pub min_gt_points: usize,
    /// Optional visibility filter for the predictive task; disabled by
    /// default.
    pub predictive_min_gt_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut iou_thresholds = BTreeMap::new();
        iou_thresholds.insert(ClassLabel::Car, 0.5);
        iou_thresholds.insert(ClassLabel::Van, 0.5);
        iou_thresholds.insert(ClassLabel::Pedestrian, 0.25);
        iou_thresholds.insert(ClassLabel::Cyclist, 0.25);
        iou_thresholds.insert(ClassLabel::TrafficCone, 0.25);
        Self {
            iou_thresholds,
            recall_positions: 40,
            min_gt_points: 1,
            predictive_min_gt_points: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.recall_positions == 0 {
            return Err(EvalError::InvalidConfig("recall_positions must be >= 1".into()));
        }
        for (class, thr) in &self.iou_thresholds {
            if !(*thr > 0.0 && *thr <= 1.0) {
                return Err(EvalError::InvalidConfig(format!(
                    "threshold {thr} for {} must be in (0, 1]",
                    class.name()
                )));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, class: ClassLabel) -> f64 {
        *self.iou_thresholds.get(&class).unwrap_or(&0.5)
    }
}

/// Re-express boxes given in `src` frame coordinates in `dst` coordinates.
pub fn transform_boxes(boxes: &[DetectionBox], src: &Pose2, dst: &Pose2) -> Vec<DetectionBox> {
    boxes.iter().map(|b| b.transformed(src, dst)).collect()
}

/// Rotated 3D IoU: BEV polygon intersection times vertical overlap.
pub fn iou_3d(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let inter_area = rect_intersection_area(&a.bev_corners(), &b.bev_corners());
    let (alo, ahi) = a.z_range();
    let (blo, bhi) = b.z_range();
    let v_overlap = (ahi.min(bhi) - alo.max(blo)).max(0.0);
    let inter = inter_area * v_overlap;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Sutherland-Hodgman clip of convex polygon `subject` against convex
/// clip polygon `clip` (both counter-clockwise), then the shoelace area.
fn rect_intersection_area(subject: &[[f64; 2]; 4], clip: &[[f64; 2]; 4]) -> f64 {
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    for e in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        let a = clip[e];
        let b = clip[(e + 1) % 4];
        let edge = [b[0] - a[0], b[1] - a[1]];
        let inside = |p: [f64; 2]| edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0;
        let mut next: Vec<[f64; 2]> = Vec::with_capacity(poly.len() + 4);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    next.push(line_intersect(prev, cur, a, b));
                }
                next.push(cur);
            } else if prev_in {
                next.push(line_intersect(prev, cur, a, b));
            }
        }
        poly = next;
    }
    shoelace(&poly)
}

fn line_intersect(p0: [f64; 2], p1: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let e = [b[0] - a[0], b[1] - a[1]];
    let denom = d[0] * e[1] - d[1] * e[0];
    if denom.abs() < 1e-15 {
        return p1;
    }
    let t = ((a[0] - p0[0]) * e[1] - (a[1] - p0[1]) * e[0]) / denom;
    [p0[0] + t * d[0], p0[1] + t * d[1]]
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc.abs() / 2.0
}

/// Per-detection labels from greedy matching, in the original det order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub det_tp: Vec<bool>,
    pub gt_matched: Vec<bool>,
    pub false_negatives: usize,
}

/// Greedy matching: detections in descending score order each take the
/// highest-IoU unmatched same-class ground truth above the threshold.
pub fn match_detections(
    dets: &[DetectionBox],
    gts: &[DetectionBox],
    class: ClassLabel,
    threshold: f64,
) -> MatchResult {
    let det_ids: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == class).collect();
    let gt_ids: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].class == class).collect();
    let mut order = det_ids.clone();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut det_tp = vec![false; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for &di in &order {
        let mut best: Option<(usize, f64)> = None;
        for &gi in &gt_ids {
            if gt_matched[gi] {
                continue;
            }
            let iou = iou_3d(&dets[di], &gts[gi]);
            if iou >= threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            det_tp[di] = true;
            gt_matched[gi] = true;
        }
    }
    let false_negatives = gt_ids.iter().filter(|&&gi| !gt_matched[gi]).count();
    MatchResult {
        det_tp,
        gt_matched,
        false_negatives,
    }
}

/// Average precision with interpolated precision sampled at
/// `recall_positions` uniform recall points. Returns None when no ground
/// truth exists for the class.
pub fn average_precision_r40(
    scored: &[(f64, bool)],
    n_gt: usize,
    cfg: &EvalConfig,
) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.1.cmp(&a.1))
    });
    // Precision/recall prefix curve.
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (rank, (_, is_tp)) in sorted.iter().enumerate() {
        if *is_tp {
            tp += 1;
        }
        let precision = tp as f64 / (rank + 1) as f64;
        let recall = tp as f64 / n_gt as f64;
        curve.push((recall, precision));
    }
    let r = cfg.recall_positions;
    let mut acc = 0.0;
    for j in 1..=r {
        let target = j as f64 / r as f64;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= target - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0f64, f64::max);
        acc += p;
    }
    Some(acc / r as f64)
}

/// Ground-truth box plus visibility metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GtEntry {
    pub bbox: DetectionBox,
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Standard,
    Predictive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ClassLabel,
    /// None when the class has no ground truth anywhere.
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_det: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub per_class: Vec<ClassReport>,
    /// Mean AP over classes with defined AP.
    pub map: Option<f64>,
    pub frames: usize,
}

impl EvalReport {
    /// Aligned text table mirroring the per-class AP layout.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
            "class", "AP", "n_gt", "n_det", "tp"
        ));
        for row in &self.per_class {
            let ap = row
                .ap
                .map(|v| format!("{:.4}", v))
                .unwrap_or_else(|| "n/a".to_string());
            out.push_str(&format!(
                "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
                row.class.name(),
                ap,
                row.n_gt,
                row.n_det,
                row.true_positives
            ));
        }
        let map = self
            .map
            .map(|v| format!("{:.4}", v))
            .unwrap_or_else(|| "n/a".to_string());
        out.push_str(&format!("{:<14} {:>8}\n", "mAP", map));
        out
    }
}

/// Evaluate pooled detections against ground truth, frame by frame.
///
/// `dets` and `gts` map frame ids to boxes; every ground-truth frame must
/// have a detection entry (possibly empty). The standard task keeps only
/// ground truth with at least `min_gt_points` points; the predictive task
/// applies `predictive_min_gt_points` (0 = keep all).
pub fn evaluate_run(
    dets: &BTreeMap<String, Vec<DetectionBox>>,
    gts: &BTreeMap<String, Vec<GtEntry>>,
    task: EvalTask,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let missing: Vec<String> = gts
        .keys()
        .filter(|frame| !dets.contains_key(*frame))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingFrames(missing));
    }

    let min_points = match task {
        EvalTask::Standard => cfg.min_gt_points,
        EvalTask::Predictive => cfg.predictive_min_gt_points,
    };

    let mut per_class = Vec::new();
    let mut defined = Vec::new();
    for class in ClassLabel::ALL {
        let threshold = cfg.threshold(class);
        let mut scored: Vec<(f64, bool)> = Vec::new();
        let mut n_gt = 0usize;
        let mut n_det = 0usize;
        let mut tp_count = 0usize;
        for (frame, gt_rows) in gts {
            let frame_gts: Vec<DetectionBox> = gt_rows
                .iter()
                .filter(|g| {
                    g.bbox.class == class
                        && (min_points == 0 || g.n_points.unwrap_or(usize::MAX) >= min_points)
                })
                .map(|g| g.bbox.clone())
                .collect();
            let frame_dets: Vec<DetectionBox> = dets[frame]
                .iter()
                .filter(|d| d.class == class)
                .cloned()
                .collect();
            n_gt += frame_gts.len();
            n_det += frame_dets.len();
            let m = match_detections(&frame_dets, &frame_gts, class, threshold);
            for (det, &is_tp) in frame_dets.iter().zip(&m.det_tp) {
                scored.push((det.score, is_tp));
                if is_tp {
                    tp_count += 1;
                }
            }
        }
        let ap = average_precision_r40(&scored, n_gt, cfg);
        if let Some(v) = ap {
            defined.push(v);
        }
        per_class.push(ClassReport {
            class,
            ap,
            n_gt,
            n_det,
            true_positives: tp_count,
        });
    }
    let map = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(EvalReport {
        task,
        per_class,
        map,
        frames: gts.len(),
    })
}
