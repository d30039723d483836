//! Predictive object detection (POD) pipeline for Doppler LiDAR.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`sim`] — synthetic Doppler LiDAR frames with per-point radial velocity
//!   and exact ground-truth boxes at arbitrary query times.
//! - [`preprocess`] — ground extraction, relative-to-absolute velocity
//!   compensation, and virtual future-point extrapolation.
//! - [`voxelizer`] — 4D (x, y, z, t) voxelization of the two-frame point set.
//! - [`sparse4d`] — sparse 4D tensor engine: rulebooks, submanifold and
//!   strided convolution, and the downsampling backbone.
//! - [`window4d`] — 4D window partitioning, set attention, and pooling.
//! - [`bevmap`] — temporal separation and BEV densification.
//! - [`decode`] — non-learned geometric box decoding.
//! - [`eval`] — rotated-IoU matching and AP-R40 metrics.
//!
//! Shared domain types (boxes, class labels, poses) live in [`types`].

pub mod bevmap;
pub mod decode;
pub mod eval;
pub mod geom;
pub mod io;
pub mod preprocess;
pub mod sim;
pub mod sparse4d;
pub mod synth;
pub mod types;
pub mod voxelizer;
pub mod weights;
pub mod window4d;

pub use types::{BoxRecord, ClassLabel, DetectionBox, Pose2, TimeTag};
