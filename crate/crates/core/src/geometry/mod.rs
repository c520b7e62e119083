//! Pinhole cameras, world-frame 3D boxes, keypoints and motion compensation.
//!
//! World frame: right-handed, `z` up. Camera frame follows the usual vision convention
//! (`x` right, `y` down, `z` forward). Yaw is counter-clockwise about world `+z` seen from
//! above and is always stored in `[-pi, pi)`.

mod camera;
mod keypoints;
mod state;

pub use camera::{CameraModel, CameraNetwork, CameraRecord, Projection, DEFAULT_DEPTH_EPSILON};
pub use keypoints::{generate_keypoints, motion_compensate, KeypointKind, KeypointSet, FIXED_KEYPOINTS};
pub use state::{box_corners, normalize_yaw, rotate_z, ObjectState3D, StateFields};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth} m)")]
    BehindCamera { depth: f64 },
    #[error("box dimensions must be strictly positive, got w={w} l={l} h={h}")]
    InvalidDimensions { w: f64, l: f64, h: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera {id}: {reason}")]
    InvalidCamera { id: u32, reason: String },
    #[error("learned offset {index} has component {value} outside [-1, 1]")]
    OffsetOutOfRange { index: usize, value: f64 },
}
