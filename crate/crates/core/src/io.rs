//! On-disk formats: point-cloud frames (float32 binary plus JSON sidecar),
//! box records (JSON lines), two-frame dumps, and BEV grids.

use crate::preprocess::{CompensationInfo, TwoFramePoints};
use crate::sim::{LidarModel, PointCloudFrame, PointRecord, PointSource};
use crate::types::{BoxRecord, Pose2};
use crate::bevmap::BevMap;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Format(String),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io error: {e}"),
            IoError::Json(e) => write!(f, "json error: {e}"),
            IoError::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json(e)
    }
}

/// Frame sidecar metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: String,
    pub timestamp: f64,
    pub sensor_origin: [f64; 3],
    pub ego_pose: Pose2,
    pub ego_velocity_gt: [f64; 2],
    pub lidar: LidarModel,
    pub n_points: usize,
}

/// Write the N x 5 float32 record file (x, y, z, i, v) plus a JSON sidecar.
/// Paths get `.bin` and `.json` extensions appended to the stem.
pub fn write_frame(dir: &Path, frame_id: &str, frame: &PointCloudFrame) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(std::fs::File::create(dir.join(format!("{frame_id}.bin")))?);
    for p in &frame.points {
        for v in [p.x, p.y, p.z, p.intensity, p.v] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    let meta = FrameMeta {
        frame_id: frame_id.to_string(),
        timestamp: frame.timestamp,
        sensor_origin: frame.sensor_origin,
        ego_pose: frame.ego_pose,
        ego_velocity_gt: frame.ego_velocity_gt,
        lidar: frame.lidar.clone(),
        n_points: frame.points.len(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(dir.join(format!("{frame_id}.json")), json)?;
    Ok(())
}

/// Read a frame written by [`write_frame`]. Per-point provenance is not
/// stored on disk, so sources come back empty.
pub fn read_frame(dir: &Path, frame_id: &str) -> Result<PointCloudFrame, IoError> {
    let meta: FrameMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{frame_id}.json")))?)?;
    let mut bytes = Vec::new();
    std::fs::File::open(dir.join(format!("{frame_id}.bin")))?.read_to_end(&mut bytes)?;
    if bytes.len() % 20 != 0 {
        return Err(IoError::Format(format!(
            "point file for {frame_id} has {} bytes, not a multiple of 20",
            bytes.len()
        )));
    }
    let n = bytes.len() / 20;
    if n != meta.n_points {
        return Err(IoError::Format(format!(
            "point file for {frame_id} has {n} records, sidecar says {}",
            meta.n_points
        )));
    }
    let mut points = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(20) {
        let f = |k: usize| f32::from_le_bytes([rec[k], rec[k + 1], rec[k + 2], rec[k + 3]]) as f64;
        points.push(PointRecord {
            x: f(0),
            y: f(4),
            z: f(8),
            intensity: f(12),
            v: f(16),
        });
    }
    Ok(PointCloudFrame {
        points,
        sensor_origin: meta.sensor_origin,
        timestamp: meta.timestamp,
        ego_pose: meta.ego_pose,
        ego_velocity_gt: meta.ego_velocity_gt,
        lidar: meta.lidar,
        sources: Vec::new(),
    })
}

/// Append-free JSONL writer: one record per line, input order preserved.
pub fn write_box_records(path: &Path, records: &[BoxRecord]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_box_records(path: &Path) -> Result<Vec<BoxRecord>, IoError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Sidecar for the optional two-frame dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoFrameMeta {
    pub delta_t: f64,
    pub ground_mean_v: f64,
    pub degraded: bool,
    pub n_current: usize,
    pub n_virtual: usize,
    pub dropped_at_origin: usize,
}

/// Dump a two-frame set as float32 N x 7 records
/// (x, y, z, i, v_abs, t_label, pad) with a JSON sidecar.
pub fn write_two_frame(
    dir: &Path,
    stem: &str,
    points: &TwoFramePoints,
    info: &CompensationInfo,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.bin")))?);
    for rec in &points.records {
        for v in [
            rec.position[0],
            rec.position[1],
            rec.position[2],
            rec.intensity,
            rec.v_abs,
            rec.t_label as f64,
            0.0,
        ] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    let meta = TwoFrameMeta {
        delta_t: points.delta_t,
        ground_mean_v: info.ground_mean_v,
        degraded: info.degraded,
        n_current: points.current().len(),
        n_virtual: points.future().len(),
        dropped_at_origin: points.dropped_at_origin,
    };
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

/// Portable BEV dump: little-endian header (u32 C, u32 Ny, u32 Nx,
/// f32 resolution, f32 origin_x, f32 origin_y) followed by C*Ny*Nx f32
/// values.
pub fn write_bev(path: &Path, map: &BevMap) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&(map.channels as u32).to_le_bytes())?;
    w.write_all(&(map.ny as u32).to_le_bytes())?;
    w.write_all(&(map.nx as u32).to_le_bytes())?;
    w.write_all(&(map.resolution as f32).to_le_bytes())?;
    w.write_all(&(map.origin[0] as f32).to_le_bytes())?;
    w.write_all(&(map.origin[1] as f32).to_le_bytes())?;
    for v in &map.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Recount point membership using in-memory source labels (test support).
pub fn source_counts(frame: &PointCloudFrame) -> (usize, usize) {
    let ground = frame
        .sources
        .iter()
        .filter(|s| matches!(s, PointSource::Ground))
        .count();
    (ground, frame.sources.len() - ground)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scene, scan_frame, SceneConfig};
    use crate::types::ClassLabel;

    #[test]
    fn frame_round_trip_via_f32() {
        let cfg = SceneConfig {
            ego_speed: 5.0,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 1).unwrap();
        let lidar = crate::sim::LidarModel {
            channels: 4,
            angular_res_deg: 2.0,
            ..Default::default()
        };
        let frame = scan_frame(&scene, 0.0, &lidar).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_frame(dir.path(), "f0", &frame).unwrap();
        let back = read_frame(dir.path(), "f0").unwrap();
        assert_eq!(back.points.len(), frame.points.len());
        for (a, b) in frame.points.iter().zip(&back.points) {
            assert!((a.x - b.x).abs() < 1e-4);
            assert!((a.v - b.v).abs() < 1e-4);
        }
        assert_eq!(back.ego_pose, frame.ego_pose);
    }

    #[test]
    fn box_records_round_trip() {
        let recs = vec![BoxRecord {
            frame_id: "f0".into(),
            t_query: 0.5,
            t_ref: 0.0,
            class: ClassLabel::Car,
            center: [10.0, 0.0, -1.0],
            dims: [4.5, 1.9, 1.6],
            yaw: 0.25,
            velocity: Some([6.0, 0.0]),
            actor_id: Some(0),
            n_points: Some(42),
            score: None,
            time_tag: None,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        write_box_records(&path, &recs).unwrap();
        let back = read_box_records(&path).unwrap();
        assert_eq!(recs, back);
    }

    #[test]
    fn truncated_point_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = FrameMeta {
            frame_id: "f0".into(),
            timestamp: 0.0,
            sensor_origin: [0.0; 3],
            ego_pose: Pose2::identity(),
            ego_velocity_gt: [0.0; 2],
            lidar: LidarModel::default(),
            n_points: 2,
        };
        std::fs::write(
            dir.path().join("f0.json"),
            serde_json::to_string(&meta).unwrap(),
        )
        .unwrap();
        std::fs::write(dir.path().join("f0.bin"), [0u8; 21]).unwrap();
        assert!(read_frame(dir.path(), "f0").is_err());
    }
}
