//! Per-camera visibility: the fraction of an object's projected 2D box that is both inside
//! the image and not covered by a nearer entity's projected box.
//!
//! Entities are cuboids. Each is reduced to the axis-aligned bounding rectangle of its
//! projected corners and the mean camera depth of those corners; a blocker occludes a sample
//! point when its rectangle contains the point and its mean depth is strictly smaller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{box_corners, CameraModel, ObjectState3D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error("object is entirely behind camera")]
    FullyBehindCamera,
    #[error("sampling grid must be at least 2 per axis, got {0}")]
    GridTooSmall(usize),
    #[error("visibility {0} outside [0, 1]")]
    OutOfRange(f64),
}

/// Tight pixel rectangle around the projected box corners, before clipping to the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRect {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    /// Mean camera depth of the corners in front of the camera.
    pub depth: f64,
}

impl ProjectedRect {
    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min) * (self.v_max - self.v_min)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    pub fn overlaps(&self, other: &ProjectedRect) -> bool {
        self.u_min <= other.u_max && other.u_min <= self.u_max && self.v_min <= other.v_max && other.v_min <= self.v_max
    }
}

/// Projects the eight corners; corners behind the camera are left out of the hull.
pub fn projected_rect(cam: &CameraModel, state: &ObjectState3D) -> Result<ProjectedRect, VisibilityError> {
    let mut rect = ProjectedRect {
        u_min: f64::INFINITY,
        v_min: f64::INFINITY,
        u_max: f64::NEG_INFINITY,
        v_max: f64::NEG_INFINITY,
        depth: 0.0,
    };
    let mut included = 0usize;
    for corner in box_corners(state) {
        if let Ok(p) = cam.project(&corner) {
            rect.u_min = rect.u_min.min(p.u);
            rect.u_max = rect.u_max.max(p.u);
            rect.v_min = rect.v_min.min(p.v);
            rect.v_max = rect.v_max.max(p.v);
            rect.depth += p.depth;
            included += 1;
        }
    }
    if included == 0 {
        return Err(VisibilityError::FullyBehindCamera);
    }
    rect.depth /= included as f64;
    Ok(rect)
}

/// Visibility value with a flag for targets that could not be projected at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleFraction {
    pub value: f64,
    pub fully_behind: bool,
}

/// Visibility of a rectangle against blocker rectangles, sampled on a `grid x grid` lattice
/// of cell centers over the target rectangle.
pub fn visible_fraction_of_rect(
    image: (u32, u32),
    target: &ProjectedRect,
    blockers: &[ProjectedRect],
    grid: usize,
) -> Result<f64, VisibilityError> {
    if grid < 2 {
        return Err(VisibilityError::GridTooSmall(grid));
    }
    let nearer: Vec<&ProjectedRect> = blockers.iter().filter(|b| b.depth < target.depth && b.overlaps(target)).collect();
    let (w, h) = (image.0 as f64, image.1 as f64);
    let du = (target.u_max - target.u_min) / grid as f64;
    let dv = (target.v_max - target.v_min) / grid as f64;
    let mut visible = 0usize;
    for j in 0..grid {
        let v = target.v_min + (j as f64 + 0.5) * dv;
        if !(v >= 0.0 && v < h) {
            continue;
        }
        for i in 0..grid {
            let u = target.u_min + (i as f64 + 0.5) * du;
            if u >= 0.0 && u < w && !nearer.iter().any(|b| b.contains(u, v)) {
                visible += 1;
            }
        }
    }
    Ok(visible as f64 / (grid * grid) as f64)
}

/// Fraction of `target`'s projected box that is visible in `cam`. Blockers entirely behind
/// the camera are ignored; a target entirely behind the camera scores 0 with the flag set.
pub fn visible_fraction(
    cam: &CameraModel,
    target: &ObjectState3D,
    blockers: &[ObjectState3D],
    grid: usize,
) -> Result<VisibleFraction, VisibilityError> {
    if grid < 2 {
        return Err(VisibilityError::GridTooSmall(grid));
    }
    let rect = match projected_rect(cam, target) {
        Ok(r) => r,
        Err(_) => return Ok(VisibleFraction { value: 0.0, fully_behind: true }),
    };
    let blocker_rects: Vec<ProjectedRect> = blockers.iter().filter_map(|b| projected_rect(cam, b).ok()).collect();
    let value = visible_fraction_of_rect((cam.width(), cam.height()), &rect, &blocker_rects, grid)?;
    Ok(VisibleFraction { value, fully_behind: false })
}

/// Visibility of one object in one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityScore {
    pub camera_id: u32,
    pub object_id: u64,
    pub value: f64,
}

impl VisibilityScore {
    pub fn new(camera_id: u32, object_id: u64, value: f64) -> Result<Self, VisibilityError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(VisibilityError::OutOfRange(value));
        }
        Ok(Self { camera_id, object_id, value })
    }
}
