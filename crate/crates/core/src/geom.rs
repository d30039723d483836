//! Small vector and pose helpers shared across the pipeline.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Vec2 = [f64; 2];

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: Vec3) -> Vec3 {
    let n = norm3(a);
    if n == 0.0 {
        [0.0; 3]
    } else {
        scale3(a, 1.0 / n)
    }
}

pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm2(a: Vec2) -> f64 {
    dot2(a, a).sqrt()
}

/// Rotate a 2D vector by `yaw` radians (counter-clockwise).
pub fn rot2(v: Vec2, yaw: f64) -> Vec2 {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rotate the x/y components of a 3D vector around z.
pub fn rot_z(v: Vec3, yaw: f64) -> Vec3 {
    let xy = rot2([v[0], v[1]], yaw);
    [xy[0], xy[1], v[2]]
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(std::f64::consts::TAU);
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

/// Wrap an angle into (-pi/2, pi/2], collapsing the 180-degree ambiguity of
/// an unoriented axis.
pub fn wrap_half_angle(a: f64) -> f64 {
    let mut a = wrap_angle(a);
    if a <= -std::f64::consts::FRAC_PI_2 {
        a += std::f64::consts::PI;
    } else if a > std::f64::consts::FRAC_PI_2 {
        a -= std::f64::consts::PI;
    }
    a
}

/// A planar pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Map a point given in this pose's local frame into the parent frame.
    pub fn to_world(&self, p: Vec3) -> Vec3 {
        let r = rot_z(p, self.yaw);
        [r[0] + self.x, r[1] + self.y, r[2]]
    }

    /// Map a parent-frame point into this pose's local frame.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        rot_z([p[0] - self.x, p[1] - self.y, p[2]], -self.yaw)
    }
}
