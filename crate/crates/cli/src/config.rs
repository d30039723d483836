//! Run configuration: one TOML file mirroring every module config.
//!
//! All sections have defaults, so an empty file is a valid config. CLI flags
//! (`--pipeline`, `--horizon`, `--seed`, `--workers`) override the file.

use anyhow::{Context, Result};
use pod4d_core::decode::DecodeParams;
use pod4d_core::eval::EvalConfig;
use pod4d_core::preprocess::{CompensationMethod, GroundParams};
use pod4d_core::sim::{LidarModel, SceneConfig};
use pod4d_core::sparse4d::BackboneConfig;
use pod4d_core::voxelizer::VoxelGridConfig;
use pod4d_core::window4d::WindowConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum PipelineKind {
    Spconv4d,
    Dsvt4d,
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineKind::Spconv4d => write!(f, "spconv4d"),
            PipelineKind::Dsvt4d => write!(f, "dsvt4d"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub scenes: usize,
    pub frames_per_scene: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            scenes: 2,
            frames_per_scene: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    pub method: CompensationMethod,
    pub ground: GroundParams,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            method: CompensationMethod::GroundMean,
            ground: GroundParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VfeSection {
    pub out_channels: usize,
}

impl Default for VfeSection {
    fn default() -> Self {
        Self { out_channels: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSection {
    #[serde(flatten)]
    pub config: WindowConfig,
    pub heads: usize,
    pub feed_forward: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            config: WindowConfig::default(),
            heads: 8,
            feed_forward: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub pipeline: PipelineKind,
    /// Future prediction horizon in seconds.
    pub horizon: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub dump_bev: bool,
    pub dump_two_frame: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            pipeline: PipelineKind::Spconv4d,
            horizon: 0.5,
            seed: 0,
            workers: None,
            dump_bev: false,
            dump_two_frame: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub conv_channels: usize,
    pub attention_channels: usize,
    pub attention_heads: usize,
    /// Attention sweeps stop above this voxel count.
    pub attention_max_voxels: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 20_000, 50_000, 100_000, 200_000, 500_000],
            repeats: 3,
            conv_channels: 8,
            attention_channels: 32,
            attention_heads: 4,
            attention_max_voxels: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    pub image_size: usize,
    /// Velocity magnitude mapped to full color saturation, m/s.
    pub velocity_scale: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            image_size: 900,
            velocity_scale: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub lidar: LidarModel,
    pub sim: SimSection,
    pub preprocess: PreprocessSection,
    /// Voxel grid override; when absent the pipeline default applies
    /// (dense grid for spconv4d, pillar grid for dsvt4d).
    pub grid: Option<VoxelGridConfig>,
    pub vfe: VfeSection,
    pub backbone: BackboneConfig,
    pub window: WindowSection,
    pub decode: DecodeParams,
    pub eval: EvalConfig,
    pub run: RunSection,
    pub bench: BenchSection,
    pub render: RenderSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        anyhow::ensure!(self.run.horizon > 0.0, "horizon must be > 0");
        self.lidar.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        if let Some(grid) = &self.grid {
            grid.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        self.window
            .config
            .validate()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        self.eval.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        anyhow::ensure!(self.vfe.out_channels > 0, "vfe out_channels must be > 0");
        anyhow::ensure!(
            self.vfe.out_channels % self.window.heads == 0,
            "vfe out_channels must divide into attention heads"
        );
        Ok(())
    }

    /// The voxel grid for a pipeline: explicit override or the pipeline
    /// default.
    pub fn grid_for(&self, pipeline: PipelineKind) -> VoxelGridConfig {
        self.grid.clone().unwrap_or_else(|| match pipeline {
            PipelineKind::Spconv4d => VoxelGridConfig::default(),
            PipelineKind::Dsvt4d => VoxelGridConfig::pillar_default(),
        })
    }

    /// Worker count: CLI flag, config, POD4D_WORKERS env, then 1.
    pub fn workers(&self, flag: Option<usize>) -> usize {
        flag.or(self.run.workers)
            .or_else(|| {
                std::env::var("POD4D_WORKERS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(1)
            .max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.pipeline, PipelineKind::Spconv4d);
        assert_eq!(cfg.window.config.window_shape, [60, 60, 1, 2]);
    }

    #[test]
    fn sections_parse_and_override() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [run]
            pipeline = "dsvt4d"
            horizon = 0.2
            seed = 9

            [lidar]
            channels = 32
            angular_res_deg = 0.5

            [window]
            window_shape = [30, 30, 1, 2]
            shifts = [[0, 0, 0, 0], [15, 15, 0, 0]]
            set_capacity = 90
            heads = 4

            [vfe]
            out_channels = 32

            [scene]
            ego_speed = 8.0

            [[scene.spawns]]
            class = "car"
            count = 4
            speed = [8.0, 15.0]
            heading = "radial"

            [eval.iou_thresholds]
            car = 0.5
            van = 0.5
            pedestrian = 0.25
            cyclist = 0.25
            traffic_cone = 0.25
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.pipeline, PipelineKind::Dsvt4d);
        assert_eq!(cfg.window.config.set_capacity, 90);
        assert_eq!(cfg.scene.spawns.len(), 1);
        assert_eq!(cfg.scene.spawns[0].count, 4);
    }

    #[test]
    fn grid_default_tracks_pipeline() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.grid_for(PipelineKind::Spconv4d).grid_shape, [1888, 1280, 64, 2]);
        assert_eq!(cfg.grid_for(PipelineKind::Dsvt4d).grid_shape, [472, 320, 1, 2]);
    }
}
