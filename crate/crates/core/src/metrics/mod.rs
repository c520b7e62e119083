//! Tracking evaluation: rotated-box 3D IoU and the HOTA family (HOTA, DetA, AssA, LocA).

mod hota;
mod iou;

use thiserror::Error;

pub use hota::{alphas, evaluate_hota, AlphaRow, HotaReport};
pub use iou::{clip_polygon, intersection_volume, iou3d, polygon_area};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has {gt} frames but prediction has {pred}")]
    FrameCountMismatch { gt: usize, pred: usize },
}
