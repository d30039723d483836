//! Dataset generation: frames, annotations, manifest.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use pod4d_core::io;
use pod4d_core::sim::{
    annotations, count_points_in_boxes, generate_scene, ground_truth_boxes, scan_frame,
};
use pod4d_core::types::BoxRecord;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Dataset manifest written next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub frame_ids: Vec<String>,
    pub scenes: usize,
    pub frames_per_scene: usize,
    pub horizon: f64,
    pub seed: u64,
    pub annotations: String,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading dataset manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn cmd_simulate(config: &RunConfig, out_dir: &Path, seed_override: Option<u64>) -> Result<DatasetManifest> {
    let seed = seed_override.unwrap_or(config.run.seed);
    let horizon = config.run.horizon;
    let rate = config.lidar.rate_hz;
    anyhow::ensure!(rate > 0.0, "lidar rate must be > 0");
    let frame_dt = 1.0 / rate;
    let span = (config.sim.frames_per_scene.saturating_sub(1)) as f64 * frame_dt + horizon;
    anyhow::ensure!(
        span <= config.scene.duration,
        "frames_per_scene x rate + horizon ({span:.2}s) exceeds scene duration ({:.2}s)",
        config.scene.duration
    );

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let frames_dir = out_dir.join("frames");
    let mut frame_ids = Vec::new();
    let mut all_annotations: Vec<BoxRecord> = Vec::new();

    for scene_idx in 0..config.sim.scenes {
        let scene = generate_scene(&config.scene, seed.wrapping_add(scene_idx as u64))
            .map_err(|e| anyhow::anyhow!("scene {scene_idx}: {e}"))?;
        for k in 0..config.sim.frames_per_scene {
            let t_ref = k as f64 * frame_dt;
            let frame_id = format!("s{scene_idx:03}_f{k:04}");
            let frame = scan_frame(&scene, t_ref, &config.lidar)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;

            // Current-frame truth with per-box visibility counts.
            let current_gt = ground_truth_boxes(&scene, t_ref, t_ref)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            let current_counts = count_points_in_boxes(&frame, &current_gt);
            let mut current_rows = annotations(&scene, &frame_id, t_ref, t_ref)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            for (row, count) in current_rows.iter_mut().zip(&current_counts) {
                row.n_points = Some(*count);
            }

            // Future truth in the current frame, annotated from a scan at the
            // query time.
            let t_query = t_ref + horizon;
            let future_frame = scan_frame(&scene, t_query, &config.lidar)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            let future_self_gt = ground_truth_boxes(&scene, t_query, t_query)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            let future_counts = count_points_in_boxes(&future_frame, &future_self_gt);
            let mut future_rows = annotations(&scene, &frame_id, t_query, t_ref)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            for (row, count) in future_rows.iter_mut().zip(&future_counts) {
                row.n_points = Some(*count);
            }

            io::write_frame(&frames_dir, &frame_id, &frame)
                .map_err(|e| anyhow::anyhow!("{frame_id}: {e}"))?;
            all_annotations.extend(current_rows);
            all_annotations.extend(future_rows);
            frame_ids.push(frame_id);
        }
    }

    io::write_box_records(&out_dir.join("annotations.jsonl"), &all_annotations)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let manifest = DatasetManifest {
        frame_ids,
        scenes: config.sim.scenes,
        frames_per_scene: config.sim.frames_per_scene,
        horizon,
        seed,
        annotations: "annotations.jsonl".to_string(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
