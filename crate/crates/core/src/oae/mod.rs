//! Occlusion-aware embeddings.
//!
//! Each camera contributes a keypoint-aligned feature for an object ([`extract_view_feature`]);
//! the per-camera features are averaged with the object's per-camera visibility as weights and
//! normalized ([`fuse_embedding`]). [`reid_evaluate`] scores retrieval over such embeddings.

mod extract;
mod fuse;
mod reid;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::FeaturePyramid;
use crate::geometry::{generate_keypoints, CameraModel, GeometryError, ObjectState3D};
use crate::visibility::VisibilityScore;

pub use extract::{extract_view_feature, ViewFeature};
pub use fuse::{fuse_embedding, fused_mean, DEFAULT_V_FLOOR};
pub use reid::{reid_evaluate, DistanceStats, Histograms, ReidReport, HISTOGRAM_BINS, HISTOGRAM_BIN_WIDTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OaeError {
    #[error("pyramid has {found} channels but the descriptor has {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("{views} views but {scores} visibility scores")]
    LengthMismatch { views: usize, scores: usize },
    #[error("no views to fuse")]
    NoViews,
    #[error("embedding dimensions differ: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("total visibility {total} is not above the floor {floor}")]
    AllOccluded { total: f64, floor: f64 },
    #[error("fused feature has zero norm")]
    ZeroNorm,
    #[error("probe identity {0} has no gallery entry")]
    MissingIdentity(u64),
    #[error("gallery needs at least two identities, found {0}")]
    DegenerateGallery(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no pyramid or visibility for camera {0}")]
    MissingCamera(u32),
}

/// Unit-norm appearance vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Scales `values` to unit length; fails for a zero or non-finite vector.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self, OaeError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(OaeError::ZeroNorm);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        l2(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = OaeError;

    fn try_from(values: Vec<f64>) -> Result<Self, OaeError> {
        Self::normalize(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A tracked hypothesis: box anchor, appearance memory and the conditioning descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub track_id: u64,
    pub anchor: ObjectState3D,
    pub memory: Embedding,
    pub descriptor: Vec<f64>,
    pub confidence: f64,
    pub age: u32,
    /// Center and time of the last matched detection.
    pub last_observed: (Vector3<f64>, f64),
}

/// Embedding of one object seen by a camera network: keypoints of `state` are sampled in every
/// camera's pyramid and the views fused with the per-camera visibilities. `pyramids` and `vis`
/// are matched to `cameras` by camera id.
pub fn object_embedding(
    cameras: &[CameraModel],
    pyramids: &[FeaturePyramid],
    state: &ObjectState3D,
    vis: &[VisibilityScore],
    descriptor: &[f64],
    learned_offsets: &[[f64; 3]],
    v_floor: f64,
) -> Result<Embedding, OaeError> {
    let kp = generate_keypoints(state, learned_offsets)?;
    let mut views = Vec::with_capacity(cameras.len());
    let mut scores = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let pyr = pyramids.iter().find(|p| p.camera_id() == cam.id()).ok_or(OaeError::MissingCamera(cam.id()))?;
        let score = vis.iter().find(|v| v.camera_id == cam.id()).ok_or(OaeError::MissingCamera(cam.id()))?;
        views.push(extract_view_feature(pyr, cam, &kp, descriptor)?);
        scores.push(*score);
    }
    fuse_embedding(&views, &scores, v_floor)
}
