//! Outside-in multi-camera 3D perception toolkit.
//!
//! The crate covers the full desk-scale loop of a static camera network:
//!
//! - [`geometry`]: pinhole cameras, world-frame 3D boxes, keypoints and motion compensation.
//! - [`feature`]: feature pyramids, bilinear sampling and multi-scale deformable aggregation
//!   (reference and packed-pair optimized kernels, plus a throughput harness).
//! - [`visibility`]: visible-to-projected 2D box area ratios against cuboid blockers.
//! - [`oae`]: occlusion-aware embeddings (keypoint feature extraction, visibility-weighted
//!   fusion) and retrieval evaluation.
//! - [`objectives`]: box, depth, visibility and identity losses with analytic gradients.
//! - [`tracker`]: velocity-propagated query tracking with optimal assignment.
//! - [`simulator`]: seeded synthetic scenes that emit truth, detections and painted pyramids.
//! - [`metrics`]: rotated-box 3D IoU and the HOTA metric family.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod feature;
pub mod geometry;
pub mod metrics;
pub mod oae;
pub mod objectives;
pub mod rng;
pub mod simulator;
pub mod tracker;
pub mod trajectory;
pub mod visibility;

pub use geometry::{CameraModel, KeypointKind, KeypointSet, ObjectState3D};
pub use trajectory::{TrackRecord, TrajectorySet};
