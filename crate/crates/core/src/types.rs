//! Shared domain types: class labels, oriented boxes, and the JSON-lines
//! record used for both annotations and detections on disk.

use crate::geom::{rot2, wrap_angle, Pose2 as GeomPose2, Vec3};
use serde::{Deserialize, Serialize};

pub use crate::geom::Pose2;

/// The five object categories handled by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Car,
    Pedestrian,
    Cyclist,
    Van,
    TrafficCone,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Car,
        ClassLabel::Pedestrian,
        ClassLabel::Cyclist,
        ClassLabel::Van,
        ClassLabel::TrafficCone,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Cyclist => "cyclist",
            ClassLabel::Van => "van",
            ClassLabel::TrafficCone => "traffic_cone",
        }
    }

    /// Nominal (length, width, height) per class, used as dimension priors by
    /// the simulator and as size templates by the decoder.
    pub fn dim_template(&self) -> [f64; 3] {
        match self {
            ClassLabel::Car => [4.5, 1.9, 1.6],
            ClassLabel::Pedestrian => [0.6, 0.6, 1.7],
            ClassLabel::Cyclist => [1.8, 0.6, 1.7],
            ClassLabel::Van => [5.8, 2.1, 2.2],
            ClassLabel::TrafficCone => [0.3, 0.3, 0.7],
        }
    }
}

/// Which frame a box refers to: the observed frame or an extrapolated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeTag {
    Current,
    Future,
}

/// An oriented 3D bounding box with class, score, and frame/time tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    /// Box center (x, y, z) in meters, in the reference frame named by `frame_ref`.
    pub center: Vec3,
    /// Length, width, height in meters. Length is the extent along `yaw`.
    pub dims: Vec3,
    /// Heading in radians, wrapped to (-pi, pi].
    pub yaw: f64,
    pub class: ClassLabel,
    /// Confidence in [0, 1]. Ground truth uses 1.0.
    pub score: f64,
    pub time_tag: TimeTag,
    /// Identifier of the frame whose coordinates the box is expressed in.
    pub frame_ref: String,
}

impl DetectionBox {
    pub fn new(center: Vec3, dims: Vec3, yaw: f64, class: ClassLabel) -> Self {
        Self {
            center,
            dims,
            yaw: wrap_angle(yaw),
            class,
            score: 1.0,
            time_tag: TimeTag::Current,
            frame_ref: String::new(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// BEV footprint corners in counter-clockwise order.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let hl = self.dims[0] / 2.0;
        let hw = self.dims[1] / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        let mut out = [[0.0; 2]; 4];
        for (o, l) in out.iter_mut().zip(local.iter()) {
            let r = rot2(*l, self.yaw);
            *o = [r[0] + self.center[0], r[1] + self.center[1]];
        }
        out
    }

    pub fn z_range(&self) -> (f64, f64) {
        let hh = self.dims[2] / 2.0;
        (self.center[2] - hh, self.center[2] + hh)
    }

    /// Test whether a point lies inside the box, optionally inflated by
    /// `margin` meters on every face.
    pub fn contains(&self, p: Vec3, margin: f64) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let local = rot2(d, -self.yaw);
        local[0].abs() <= self.dims[0] / 2.0 + margin
            && local[1].abs() <= self.dims[1] / 2.0 + margin
            && (p[2] - self.center[2]).abs() <= self.dims[2] / 2.0 + margin
    }

    /// Re-express the box, currently in `src` frame coordinates, in `dst`
    /// frame coordinates. Both poses are world-frame rigid 2D transforms.
    pub fn transformed(&self, src: &GeomPose2, dst: &GeomPose2) -> DetectionBox {
        let world = src.to_world(self.center);
        let center = dst.to_local(world);
        let yaw = wrap_angle(self.yaw + src.yaw - dst.yaw);
        DetectionBox {
            center,
            yaw,
            ..self.clone()
        }
    }
}

/// One JSON-lines row of the annotation/detection box format. Annotation rows
/// carry `velocity`, `actor_id` and `n_points`; detection rows carry `score`
/// and `time_tag`. Absent fields are omitted from the serialized line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub frame_id: String,
    pub t_query: f64,
    pub t_ref: f64,
    pub class: ClassLabel,
    pub center: Vec3,
    pub dims: Vec3,
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_tag: Option<TimeTag>,
}

impl BoxRecord {
    pub fn to_detection(&self) -> DetectionBox {
        DetectionBox {
            center: self.center,
            dims: self.dims,
            yaw: self.yaw,
            class: self.class,
            score: self.score.unwrap_or(1.0),
            time_tag: self.time_tag.unwrap_or(if self.t_query == self.t_ref {
                TimeTag::Current
            } else {
                TimeTag::Future
            }),
            frame_ref: self.frame_id.clone(),
        }
    }

    pub fn from_detection(det: &DetectionBox, t_query: f64, t_ref: f64) -> Self {
        BoxRecord {
            frame_id: det.frame_ref.clone(),
            t_query,
            t_ref,
            class: det.class,
            center: det.center,
            dims: det.dims,
            yaw: det.yaw,
            velocity: None,
            actor_id: None,
            n_points: None,
            score: Some(det.score),
            time_tag: Some(det.time_tag),
        }
    }
}
