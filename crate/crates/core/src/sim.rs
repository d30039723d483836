//! Synthetic Doppler LiDAR simulator.
//!
//! Scenes are parametric worlds: rigid box actors with constant-velocity
//! (optionally constant yaw-rate) kinematics above an infinite ground plane,
//! observed by an ego vehicle carrying the sensor at its origin. Frames are
//! produced by casting one ray per (channel, azimuth step) and keeping the
//! first hit among actor boxes and the ground plane. Every point carries the
//! relative radial velocity seen by the sensor, with the sign convention
//! positive = receding.

use crate::geom::{dot3, norm3, rot2, rot_z, sub3, wrap_angle, Pose2, Vec3};
use crate::types::{BoxRecord, ClassLabel, DetectionBox, TimeTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug)]
pub enum SimError {
    InvalidConfig(String),
    PlacementFailed { class: ClassLabel, attempts: usize },
    TimeOutOfRange { t: f64, duration: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidConfig(msg) => write!(f, "invalid scene config: {msg}"),
            SimError::PlacementFailed { class, attempts } => write!(
                f,
                "could not place {} without overlap after {attempts} attempts",
                class.name()
            ),
            SimError::TimeOutOfRange { t, duration } => {
                write!(f, "query time {t} outside scene validity [0, {duration}]")
            }
        }
    }
}

impl std::error::Error for SimError {}

/// Sensor model. Angular resolution fixes the azimuth step count as
/// round(fov_h / angular_res).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarModel {
    pub channels: usize,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub angular_res_deg: f64,
    pub max_range: f64,
    pub rate_hz: f64,
    pub noise_sigma_range: f64,
    pub noise_sigma_vel: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            channels: 128,
            fov_h_deg: 100.0,
            fov_v_deg: 25.0,
            angular_res_deg: 0.2,
            max_range: 200.0,
            rate_hz: 10.0,
            noise_sigma_range: 0.0,
            noise_sigma_vel: 0.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.channels < 1 {
            return Err(SimError::InvalidConfig("channels must be >= 1".into()));
        }
        if !(self.fov_h_deg > 0.0 && self.fov_h_deg <= 360.0) {
            return Err(SimError::InvalidConfig("fov_h must be in (0, 360]".into()));
        }
        if self.fov_v_deg < 0.0 {
            return Err(SimError::InvalidConfig("fov_v must be >= 0".into()));
        }
        if self.max_range <= 0.0 {
            return Err(SimError::InvalidConfig("max_range must be > 0".into()));
        }
        if self.angular_res_deg <= 0.0 {
            return Err(SimError::InvalidConfig("angular_res must be > 0".into()));
        }
        if self.noise_sigma_range < 0.0 || self.noise_sigma_vel < 0.0 {
            return Err(SimError::InvalidConfig("noise sigmas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn azimuth_steps(&self) -> usize {
        ((self.fov_h_deg / self.angular_res_deg).round() as usize).max(1)
    }
}

/// A rigid box actor. Position integrates constant velocity; yaw integrates
/// constant yaw rate. The box is assumed to rest on the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub class: ClassLabel,
    /// Length, width, height in meters.
    pub dims: Vec3,
    pub pose0: Pose2,
    /// World-frame velocity in m/s.
    pub velocity: [f64; 2],
    pub yaw_rate: f64,
}

impl ActorTrack {
    pub fn pose_at(&self, t: f64) -> Pose2 {
        Pose2::new(
            self.pose0.x + self.velocity[0] * t,
            self.pose0.y + self.velocity[1] * t,
            wrap_angle(self.pose0.yaw + self.yaw_rate * t),
        )
    }

    pub fn speed(&self) -> f64 {
        (self.velocity[0].powi(2) + self.velocity[1].powi(2)).sqrt()
    }

    /// World velocity of a material point `p_world` on the actor at time `t`,
    /// including the rigid-body rotational term.
    pub fn point_velocity(&self, p_world: Vec3, t: f64) -> Vec3 {
        let pose = self.pose_at(t);
        let rx = p_world[0] - pose.x;
        let ry = p_world[1] - pose.y;
        [
            self.velocity[0] - self.yaw_rate * ry,
            self.velocity[1] + self.yaw_rate * rx,
            0.0,
        ]
    }

    /// Box center in world coordinates at time `t`, given the ground height.
    pub fn center_at(&self, t: f64, ground_z: f64) -> Vec3 {
        let pose = self.pose_at(t);
        [pose.x, pose.y, ground_z + self.dims[2] / 2.0]
    }
}

/// A parametric world: actors, ego trajectory, ground plane, bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub actors: Vec<ActorTrack>,
    pub ego: ActorTrack,
    pub ground_z: f64,
    /// World half-extent in meters; actors start inside [-extent, extent]^2.
    pub extent: f64,
    pub duration: f64,
    pub rng_seed: u64,
}

impl Scene {
    pub fn check_time(&self, t: f64) -> Result<(), SimError> {
        if t < 0.0 || t > self.duration {
            return Err(SimError::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(())
    }
}

/// How spawned actors pick their heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingModel {
    /// Uniform over (-pi, pi].
    Uniform,
    /// Along the sensor ray through the spawn point, receding or approaching
    /// with equal probability.
    Radial,
    /// Fixed heading in radians.
    Fixed(f64),
}

/// One group of actors to spawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnSpec {
    pub class: ClassLabel,
    pub count: usize,
    /// Speed range in m/s, sampled uniformly.
    pub speed: [f64; 2],
    pub heading: HeadingModel,
    pub yaw_rate: [f64; 2],
    /// Radial distance range from the world origin, meters.
    pub range: [f64; 2],
    /// Azimuth range in degrees (0 = +x).
    pub az_deg: [f64; 2],
}

impl Default for SpawnSpec {
    fn default() -> Self {
        Self {
            class: ClassLabel::Car,
            count: 0,
            speed: [0.0, 0.0],
            heading: HeadingModel::Uniform,
            yaw_rate: [0.0, 0.0],
            range: [8.0, 60.0],
            az_deg: [-45.0, 45.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub extent: f64,
    pub ground_z: f64,
    pub duration: f64,
    /// Ego speed along +x, m/s.
    pub ego_speed: f64,
    pub spawns: Vec<SpawnSpec>,
    /// Minimum number of actors that must exceed the dynamic speed floor.
    pub min_dynamic: usize,
    pub dynamic_speed_floor: f64,
    pub placement_attempts: usize,
    /// Relative jitter applied to class dimension templates.
    pub dim_jitter: f64,
    /// Clearance kept between actors and the ego trajectory, meters.
    pub keepout: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            extent: 80.0,
            ground_z: -1.8,
            duration: 10.0,
            ego_speed: 0.0,
            spawns: Vec::new(),
            min_dynamic: 0,
            dynamic_speed_floor: 1.0,
            placement_attempts: 200,
            dim_jitter: 0.05,
            keepout: 3.0,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.extent <= 0.0 {
            return Err(SimError::InvalidConfig("extent must be > 0".into()));
        }
        if self.duration <= 0.0 {
            return Err(SimError::InvalidConfig("duration must be > 0".into()));
        }
        if self.dim_jitter < 0.0 || self.dim_jitter >= 1.0 {
            return Err(SimError::InvalidConfig("dim_jitter must be in [0, 1)".into()));
        }
        let mut guaranteed_dynamic = 0usize;
        for s in &self.spawns {
            if s.speed[0] < 0.0 || s.speed[1] < s.speed[0] {
                return Err(SimError::InvalidConfig(format!(
                    "bad speed range {:?} for {}",
                    s.speed,
                    s.class.name()
                )));
            }
            if s.range[0] <= 0.0 || s.range[1] < s.range[0] {
                return Err(SimError::InvalidConfig(format!(
                    "bad range {:?} for {}",
                    s.range,
                    s.class.name()
                )));
            }
            if s.speed[0] > self.dynamic_speed_floor {
                guaranteed_dynamic += s.count;
            }
        }
        if guaranteed_dynamic < self.min_dynamic {
            return Err(SimError::InvalidConfig(format!(
                "config guarantees only {guaranteed_dynamic} dynamic actors, {} required",
                self.min_dynamic
            )));
        }
        Ok(())
    }
}

/// Where a simulated point came from. Kept in memory for test oracles; not
/// part of the serialized frame format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Ground,
    Actor(u32),
}

/// One point record: ego-frame position, intensity, relative radial velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub v: f64,
}

impl PointRecord {
    pub fn position(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }
}

/// One Doppler LiDAR sweep with sensor metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub points: Vec<PointRecord>,
    /// Sensor origin in the ego frame; zero for a center-mounted sensor.
    pub sensor_origin: Vec3,
    pub timestamp: f64,
    pub ego_pose: Pose2,
    /// World-frame ego velocity; metadata only, not consumed by the
    /// compensation path.
    pub ego_velocity_gt: [f64; 2],
    pub lidar: LidarModel,
    /// Per-point provenance, aligned with `points`.
    pub sources: Vec<PointSource>,
}

fn class_reflectivity(class: ClassLabel) -> f64 {
    match class {
        ClassLabel::Car => 0.6,
        ClassLabel::Van => 0.55,
        ClassLabel::Pedestrian => 0.45,
        ClassLabel::Cyclist => 0.5,
        ClassLabel::TrafficCone => 0.85,
    }
}

const GROUND_REFLECTIVITY: f64 = 0.3;

/// Generate a deterministic scene from a config and seed.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ego = ActorTrack {
        class: ClassLabel::Car,
        dims: ClassLabel::Car.dim_template(),
        pose0: Pose2::identity(),
        velocity: [config.ego_speed, 0.0],
        yaw_rate: 0.0,
    };
    let ego_end = [ego.velocity[0] * config.duration, ego.velocity[1] * config.duration];

    let mut actors: Vec<ActorTrack> = Vec::new();
    for spawn in &config.spawns {
        for _ in 0..spawn.count {
            let actor = place_actor(spawn, config, &actors, ego_end, &mut rng)?;
            actors.push(actor);
        }
    }

    let dynamic = actors
        .iter()
        .filter(|a| a.speed() > config.dynamic_speed_floor)
        .count();
    if dynamic < config.min_dynamic {
        return Err(SimError::InvalidConfig(format!(
            "sampled scene has {dynamic} dynamic actors, {} required",
            config.min_dynamic
        )));
    }

    Ok(Scene {
        actors,
        ego,
        ground_z: config.ground_z,
        extent: config.extent,
        duration: config.duration,
        rng_seed: seed,
    })
}

fn place_actor(
    spawn: &SpawnSpec,
    config: &SceneConfig,
    placed: &[ActorTrack],
    ego_end: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<ActorTrack, SimError> {
    let template = spawn.class.dim_template();
    for _ in 0..config.placement_attempts.max(1) {
        let mut dims = [0.0; 3];
        for (d, t) in dims.iter_mut().zip(template.iter()) {
            let j = 1.0 + rng.gen_range(-config.dim_jitter..=config.dim_jitter);
            *d = t * j;
        }
        let az = rng.gen_range(spawn.az_deg[0]..=spawn.az_deg[1]).to_radians();
        let r = rng.gen_range(spawn.range[0]..=spawn.range[1]);
        let pos = [r * az.cos(), r * az.sin()];
        if pos[0].abs() > config.extent || pos[1].abs() > config.extent {
            continue;
        }
        let speed = rng.gen_range(spawn.speed[0]..=spawn.speed[1]);
        let yaw = match spawn.heading {
            HeadingModel::Uniform => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            HeadingModel::Radial => {
                if rng.gen_bool(0.5) {
                    az
                } else {
                    wrap_angle(az + std::f64::consts::PI)
                }
            }
            HeadingModel::Fixed(h) => h,
        };
        let yaw_rate = rng.gen_range(spawn.yaw_rate[0]..=spawn.yaw_rate[1]);
        let velocity = [speed * yaw.cos(), speed * yaw.sin()];
        let diag = (dims[0].powi(2) + dims[1].powi(2)).sqrt() / 2.0;

        let mut ok = dist_point_segment(pos, [0.0, 0.0], ego_end) > config.keepout + diag;
        if ok {
            for other in placed {
                let odiag = (other.dims[0].powi(2) + other.dims[1].powi(2)).sqrt() / 2.0;
                let dx = pos[0] - other.pose0.x;
                let dy = pos[1] - other.pose0.y;
                if (dx * dx + dy * dy).sqrt() < diag + odiag + 0.5 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(ActorTrack {
                class: spawn.class,
                dims,
                pose0: Pose2::new(pos[0], pos[1], yaw),
                velocity,
                yaw_rate,
            });
        }
    }
    Err(SimError::PlacementFailed {
        class: spawn.class,
        attempts: config.placement_attempts,
    })
}

fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

struct RayHit {
    t: f64,
    source: PointSource,
    /// Cosine of the incidence angle against the hit surface normal.
    cos_incidence: f64,
}

/// Slab test of a ray against an actor's oriented box at time `t`.
/// Returns the entry distance and the hit-face axis.
fn ray_box(origin: Vec3, dir: Vec3, actor: &ActorTrack, t: f64, ground_z: f64) -> Option<(f64, f64)> {
    let pose = actor.pose_at(t);
    let center = [pose.x, pose.y, ground_z + actor.dims[2] / 2.0];
    let o = rot_z(sub3(origin, center), -pose.yaw);
    let d = rot_z(dir, -pose.yaw);
    let half = [actor.dims[0] / 2.0, actor.dims[1] / 2.0, actor.dims[2] / 2.0];

    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0usize;
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let mut t0 = (-half[a] - o[a]) * inv;
        let mut t1 = (half[a] - o[a]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = a;
        }
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far < 1e-6 {
        return None;
    }
    let t_hit = if t_near > 1e-6 { t_near } else { t_far };
    let cos_inc = d[near_axis].abs() / norm3(d);
    Some((t_hit, cos_inc))
}

/// Cast one frame. Noise is applied along the ray (range) and to the velocity
/// scalar, so noisy points still lie exactly on their rays.
pub fn scan_frame(scene: &Scene, t: f64, lidar: &LidarModel) -> Result<PointCloudFrame, SimError> {
    scene.check_time(t)?;
    lidar.validate()?;

    let ego_pose = scene.ego.pose_at(t);
    let ego_vel = [scene.ego.velocity[0], scene.ego.velocity[1]];
    let origin_world = [ego_pose.x, ego_pose.y, 0.0];

    let steps = lidar.azimuth_steps();
    let fov_h = lidar.fov_h_deg.to_radians();
    let fov_v = lidar.fov_v_deg.to_radians();

    let mut rng = frame_rng(scene.rng_seed, t);
    let range_noise = Normal::new(0.0, lidar.noise_sigma_range.max(f64::MIN_POSITIVE)).unwrap();
    let vel_noise = Normal::new(0.0, lidar.noise_sigma_vel.max(f64::MIN_POSITIVE)).unwrap();

    let mut points = Vec::new();
    let mut sources = Vec::new();

    for ch in 0..lidar.channels {
        let elev = if lidar.channels == 1 {
            0.0
        } else {
            -fov_v / 2.0 + fov_v * ch as f64 / (lidar.channels - 1) as f64
        };
        let (se, ce) = elev.sin_cos();
        for k in 0..steps {
            let az = -fov_h / 2.0 + fov_h * (k as f64 + 0.5) / steps as f64;
            let (sa, ca) = az.sin_cos();
            let dir_ego = [ce * ca, ce * sa, se];
            let dir_world = rot_z(dir_ego, ego_pose.yaw);

            let mut best: Option<RayHit> = None;
            // Ground plane.
            if dir_world[2].abs() > 1e-12 {
                let tg = (scene.ground_z - origin_world[2]) / dir_world[2];
                if tg > 1e-6 && tg <= lidar.max_range {
                    best = Some(RayHit {
                        t: tg,
                        source: PointSource::Ground,
                        cos_incidence: dir_world[2].abs(),
                    });
                }
            }
            for (ai, actor) in scene.actors.iter().enumerate() {
                if let Some((th, cos_inc)) = ray_box(origin_world, dir_world, actor, t, scene.ground_z) {
                    if th <= lidar.max_range && best.as_ref().map_or(true, |b| th < b.t) {
                        best = Some(RayHit {
                            t: th,
                            source: PointSource::Actor(ai as u32),
                            cos_incidence: cos_inc,
                        });
                    }
                }
            }

            let Some(hit) = best else { continue };
            let p_world = [
                origin_world[0] + hit.t * dir_world[0],
                origin_world[1] + hit.t * dir_world[1],
                origin_world[2] + hit.t * dir_world[2],
            ];
            let point_vel = match hit.source {
                PointSource::Ground => [0.0, 0.0, 0.0],
                PointSource::Actor(ai) => scene.actors[ai as usize].point_velocity(p_world, t),
            };
            let rel_vel = [
                point_vel[0] - ego_vel[0],
                point_vel[1] - ego_vel[1],
                point_vel[2],
            ];
            let mut v = dot3(rel_vel, dir_world);
            let base = match hit.source {
                PointSource::Ground => GROUND_REFLECTIVITY,
                PointSource::Actor(ai) => class_reflectivity(scene.actors[ai as usize].class),
            };
            let intensity = (base * hit.cos_incidence).clamp(0.02, 1.0);

            let mut range = hit.t;
            if lidar.noise_sigma_range > 0.0 {
                range = (range + range_noise.sample(&mut rng)).max(0.01);
            }
            if lidar.noise_sigma_vel > 0.0 {
                v += vel_noise.sample(&mut rng);
            }
            let p_ego = scale_dir(dir_ego, range);
            points.push(PointRecord {
                x: p_ego[0],
                y: p_ego[1],
                z: p_ego[2],
                intensity,
                v,
            });
            sources.push(hit.source);
        }
    }

    Ok(PointCloudFrame {
        points,
        sensor_origin: [0.0; 3],
        timestamp: t,
        ego_pose,
        ego_velocity_gt: ego_vel,
        lidar: lidar.clone(),
        sources,
    })
}

fn scale_dir(d: Vec3, s: f64) -> Vec3 {
    [d[0] * s, d[1] * s, d[2] * s]
}

fn frame_rng(seed: u64, t: f64) -> ChaCha8Rng {
    // splitmix64-style mix of the scene seed and the timestamp bits.
    let mut z = seed ^ t.to_bits().wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Actor boxes at `t_query`, expressed in the ego frame at `t_ref`.
/// With `t_query == t_ref` this is standard-detection truth; with a later
/// query time it is the predictive-detection truth.
pub fn ground_truth_boxes(
    scene: &Scene,
    t_query: f64,
    t_ref: f64,
) -> Result<Vec<DetectionBox>, SimError> {
    scene.check_time(t_query)?;
    scene.check_time(t_ref)?;
    let ego_ref = scene.ego.pose_at(t_ref);
    let tag = if t_query == t_ref {
        TimeTag::Current
    } else {
        TimeTag::Future
    };
    Ok(scene
        .actors
        .iter()
        .map(|actor| {
            let pose = actor.pose_at(t_query);
            let world = DetectionBox {
                center: [pose.x, pose.y, scene.ground_z + actor.dims[2] / 2.0],
                dims: actor.dims,
                yaw: pose.yaw,
                class: actor.class,
                score: 1.0,
                time_tag: tag,
                frame_ref: String::new(),
            };
            world.transformed(&Pose2::identity(), &ego_ref)
        })
        .collect())
}

/// Full annotation rows for one frame: ground truth boxes plus per-actor
/// velocity (in the reference ego frame) and actor ids.
pub fn annotations(
    scene: &Scene,
    frame_id: &str,
    t_query: f64,
    t_ref: f64,
) -> Result<Vec<BoxRecord>, SimError> {
    let boxes = ground_truth_boxes(scene, t_query, t_ref)?;
    let ego_ref = scene.ego.pose_at(t_ref);
    Ok(boxes
        .into_iter()
        .zip(scene.actors.iter())
        .enumerate()
        .map(|(idx, (bbox, actor))| {
            let v = rot2(actor.velocity, -ego_ref.yaw);
            BoxRecord {
                frame_id: frame_id.to_string(),
                t_query,
                t_ref,
                class: bbox.class,
                center: bbox.center,
                dims: bbox.dims,
                yaw: bbox.yaw,
                velocity: Some(v),
                actor_id: Some(idx as u32),
                n_points: None,
                score: None,
                time_tag: Some(bbox.time_tag),
            }
        })
        .collect())
}

/// Count frame points falling inside each box (used to annotate visibility).
pub fn count_points_in_boxes(frame: &PointCloudFrame, boxes: &[DetectionBox]) -> Vec<usize> {
    boxes
        .iter()
        .map(|b| {
            frame
                .points
                .iter()
                .filter(|p| b.contains(p.position(), 1e-6))
                .count()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::cross3;

    fn flat_scene(actors: Vec<ActorTrack>, ego_speed: f64) -> Scene {
        Scene {
            actors,
            ego: ActorTrack {
                class: ClassLabel::Car,
                dims: ClassLabel::Car.dim_template(),
                pose0: Pose2::identity(),
                velocity: [ego_speed, 0.0],
                yaw_rate: 0.0,
            },
            ground_z: -1.8,
            extent: 100.0,
            duration: 10.0,
            rng_seed: 7,
        }
    }

    fn car_at(x: f64, y: f64, velocity: [f64; 2]) -> ActorTrack {
        ActorTrack {
            class: ClassLabel::Car,
            dims: [4.5, 1.9, 1.6],
            pose0: Pose2::new(x, y, 0.0),
            velocity,
            yaw_rate: 0.0,
        }
    }

    fn small_lidar() -> LidarModel {
        LidarModel {
            channels: 16,
            fov_v_deg: 20.0,
            angular_res_deg: 0.5,
            ..LidarModel::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_scene() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(&cfg, 7).unwrap();
        assert!(scene.actors.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut cfg = SceneConfig::default();
        cfg.spawns.push(SpawnSpec {
            class: ClassLabel::Car,
            count: 5,
            speed: [5.0, 15.0],
            ..SpawnSpec::default()
        });
        let a = generate_scene(&cfg, 1).unwrap();
        let b = generate_scene(&cfg, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn sampled_speeds_respect_declared_bounds() {
        let mut cfg = SceneConfig::default();
        cfg.spawns.push(SpawnSpec {
            class: ClassLabel::Car,
            count: 5,
            speed: [5.0, 15.0],
            ..SpawnSpec::default()
        });
        let scene = generate_scene(&cfg, 1).unwrap();
        assert_eq!(scene.actors.len(), 5);
        for a in &scene.actors {
            let s = a.speed();
            assert!((5.0..=15.0).contains(&s), "speed {s} out of bounds");
        }
    }

    #[test]
    fn overfull_extent_is_rejected() {
        let mut cfg = SceneConfig {
            extent: 6.0,
            placement_attempts: 20,
            keepout: 1.0,
            ..SceneConfig::default()
        };
        cfg.spawns.push(SpawnSpec {
            class: ClassLabel::Van,
            count: 60,
            range: [1.0, 6.0],
            az_deg: [-180.0, 180.0],
            ..SpawnSpec::default()
        });
        assert!(matches!(
            generate_scene(&cfg, 3),
            Err(SimError::PlacementFailed { .. })
        ));
    }

    #[test]
    fn static_world_static_ego_has_zero_velocity() {
        let scene = flat_scene(vec![car_at(20.0, 0.0, [0.0, 0.0])], 0.0);
        let frame = scan_frame(&scene, 0.0, &small_lidar()).unwrap();
        assert!(!frame.points.is_empty());
        for p in &frame.points {
            assert!(p.v.abs() < 1e-12, "expected zero velocity, got {}", p.v);
        }
    }

    #[test]
    fn receding_actor_has_positive_radial_velocity() {
        let scene = flat_scene(vec![car_at(20.0, 0.0, [5.0, 0.0])], 0.0);
        let frame = scan_frame(&scene, 0.0, &small_lidar()).unwrap();
        let mut saw_actor = false;
        for (p, s) in frame.points.iter().zip(&frame.sources) {
            if let PointSource::Actor(_) = s {
                saw_actor = true;
                // Points straight ahead recede at close to +5.
                if p.y.abs() < 0.3 && p.z > -0.5 {
                    assert!((p.v - 5.0).abs() < 0.05, "v = {}", p.v);
                }
                assert!(p.v > 0.0);
            }
        }
        assert!(saw_actor);
    }

    #[test]
    fn forward_ego_sees_negative_ground_velocity() {
        let scene = flat_scene(vec![], 10.0);
        let frame = scan_frame(&scene, 0.0, &small_lidar()).unwrap();
        let straight = frame
            .points
            .iter()
            .filter(|p| p.y.abs() < 0.2)
            .min_by(|a, b| a.z.partial_cmp(&b.z).unwrap().reverse())
            .expect("ground points ahead");
        // v = -ego_speed * cos(elevation); the highest ground point ahead has
        // the smallest depression angle.
        assert!(straight.v < -9.5, "v = {}", straight.v);
        for p in &frame.points {
            assert!(p.v < 0.0);
        }
    }

    #[test]
    fn points_lie_on_rays_and_velocity_recomputes() {
        let scene = flat_scene(vec![car_at(25.0, 3.0, [4.0, -2.0])], 8.0);
        let lidar = small_lidar();
        let frame = scan_frame(&scene, 0.5, &lidar).unwrap();
        let ego_pose = frame.ego_pose;
        for (p, s) in frame.points.iter().zip(&frame.sources) {
            let pos = p.position();
            let dir = crate::geom::normalize3(pos);
            // On-ray: cross product of position and direction vanishes.
            let c = cross3(pos, dir);
            assert!(norm3(c) < 1e-9);
            // Velocity recomputes from scene kinematics.
            let p_world = ego_pose.to_world(pos);
            let pv = match s {
                PointSource::Ground => [0.0, 0.0, 0.0],
                PointSource::Actor(ai) => scene.actors[*ai as usize].point_velocity(p_world, 0.5),
            };
            let d_world = rot_z(dir, ego_pose.yaw);
            let expect = dot3(
                [pv[0] - scene.ego.velocity[0], pv[1] - scene.ego.velocity[1], pv[2]],
                d_world,
            );
            assert!((p.v - expect).abs() < 1e-9, "v={} expect={}", p.v, expect);
        }
    }

    #[test]
    fn actor_points_lie_inside_their_box() {
        let scene = flat_scene(vec![car_at(25.0, -4.0, [3.0, 1.0])], 5.0);
        let t = 1.25;
        let frame = scan_frame(&scene, t, &small_lidar()).unwrap();
        let gts = ground_truth_boxes(&scene, t, t).unwrap();
        let mut actor_points = 0;
        for (p, s) in frame.points.iter().zip(&frame.sources) {
            if let PointSource::Actor(ai) = s {
                actor_points += 1;
                assert!(gts[*ai as usize].contains(p.position(), 1e-6));
            }
        }
        assert!(actor_points > 10);
    }

    #[test]
    fn frame_is_deterministic_with_noise() {
        let scene = flat_scene(vec![car_at(20.0, 0.0, [5.0, 0.0])], 3.0);
        let lidar = LidarModel {
            noise_sigma_range: 0.05,
            noise_sigma_vel: 0.2,
            ..small_lidar()
        };
        let a = scan_frame(&scene, 1.0, &lidar).unwrap();
        let b = scan_frame(&scene, 1.0, &lidar).unwrap();
        assert_eq!(a, b);
        let c = scan_frame(&scene, 1.1, &lidar).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn ground_truth_time_identity_and_advance() {
        let actor = car_at(10.0, 0.0, [6.0, 0.0]);
        let scene = flat_scene(vec![actor], 0.0);
        let now = ground_truth_boxes(&scene, 1.0, 1.0).unwrap();
        assert!((now[0].center[0] - 16.0).abs() < 1e-12);
        let future = ground_truth_boxes(&scene, 1.5, 1.0).unwrap();
        assert!((future[0].center[0] - 19.0).abs() < 1e-12);
        assert_eq!(future[0].time_tag, TimeTag::Future);
    }

    #[test]
    fn ground_truth_follows_ego_frame() {
        let actor = car_at(10.0, 0.0, [0.0, 0.0]);
        let scene = flat_scene(vec![actor], 2.0);
        // At t=1 the ego has advanced 2 m, so the static actor appears 2 m closer.
        let boxes = ground_truth_boxes(&scene, 1.0, 1.0).unwrap();
        assert!((boxes[0].center[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let scene = flat_scene(vec![], 0.0);
        assert!(scan_frame(&scene, 99.0, &small_lidar()).is_err());
        assert!(ground_truth_boxes(&scene, -1.0, 0.0).is_err());
    }

    #[test]
    fn yaw_rate_rotates_box_and_points() {
        let mut actor = car_at(15.0, 0.0, [0.0, 0.0]);
        actor.yaw_rate = 0.5;
        let scene = flat_scene(vec![actor], 0.0);
        let boxes = ground_truth_boxes(&scene, 2.0, 2.0).unwrap();
        assert!((boxes[0].yaw - 1.0).abs() < 1e-12);
        // Rotational term: a point on the +y side of a spinning box moves in -x.
        let v = scene.actors[0].point_velocity([15.0, 1.0, -1.0], 2.0);
        assert!((v[0] + 0.5).abs() < 1e-12);
        assert!(v[1].abs() < 1e-12);
    }
}
