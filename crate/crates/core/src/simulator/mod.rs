//! Synthetic outside-in scenes.
//!
//! Objects follow piecewise-linear waypoint paths among static cuboid occluders and are watched
//! by a fixed camera network. Per frame the simulator emits the true boxes, exact per-camera
//! visibility, noisy detections and feature pyramids painted with each identity's signature.
//! All randomness comes from named substreams of the scene seed, one per frame and purpose, so
//! frames can be generated in any order or in parallel.

mod archive;
mod config;
mod paint;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::FeaturePyramid;
use crate::geometry::{CameraModel, GeometryError, ObjectState3D};
use crate::oae::Embedding;
use crate::rng::substream;
use crate::tracker::{Detection, DetectionFrame};
use crate::trajectory::{TrackRecord, TrajectorySet};
use crate::visibility::{visible_fraction, VisibilityScore};

pub use archive::{read_pyramids, write_pyramid_frame, write_pyramid_header, PyramidArchive, PYRAMID_MAGIC};
pub use config::{NoiseConfig, ObjectSpec, Occluder, PyramidConfig, SceneConfig, Waypoint, SCENE_SCHEMA_VERSION};
pub use paint::{level_shape, paint_pyramid, BACKGROUND_SIGMA};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("object {identity}: invalid waypoints: {reason}")]
    InvalidWaypoints { identity: u64, reason: String },
    #[error("scene schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid scene: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("pyramid archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTruth {
    pub identity: u64,
    pub category: String,
    pub state: ObjectState3D,
}

/// Ground truth of one frame. `visibility` holds one score per (camera, object), cameras in
/// configuration order and objects in frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTruth {
    pub frame: usize,
    pub time: f64,
    pub objects: Vec<ObjectTruth>,
    pub visibility: Vec<VisibilityScore>,
}

impl FrameTruth {
    /// Scores of the object at position `index`, one per camera.
    pub fn visibility_of(&self, index: usize) -> Vec<VisibilityScore> {
        let id = self.objects[index].identity;
        self.visibility.iter().filter(|v| v.object_id == id).copied().collect()
    }
}

/// A detection with the identity that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDetection {
    pub identity: u64,
    pub detection: Detection,
}

/// Identity-labelled embedding, the line format of retrieval gallery and probe files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledEmbedding {
    pub identity: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    pub embedding: Embedding,
}

/// Unit Gaussian direction of dimension `dim` for `identity`.
pub fn signature(seed: u64, identity: u64, dim: usize) -> Embedding {
    let mut rng = substream(seed, "signature", identity);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Ok(e) = Embedding::normalize(v) {
            return e;
        }
    }
}

/// Noisy detections for one frame. Each object is dropped with probability `noise.dropout` or
/// when its mean visibility is below `noise.min_visibility`; survivors get Gaussian center,
/// dimension and yaw perturbations, their true velocity, an
/// embedding `normalize(signature + noise)` with noise of expected norm `noise.embedding`,
/// and the mean visibility over cameras as confidence.
pub fn detections_from_truth(
    truth: &FrameTruth,
    signatures: &[(u64, Embedding)],
    noise: &NoiseConfig,
    seed: u64,
) -> Vec<LabeledDetection> {
    let mut rng = substream(seed, "detections", truth.frame as u64);
    let mut out = Vec::new();
    for (index, obj) in truth.objects.iter().enumerate() {
        let keep = rng.random::<f64>() >= noise.dropout;
        let mut normal = |sigma: f64| sigma * rng.sample::<f64, _>(StandardNormal);
        let c = obj.state.center();
        let center = c + nalgebra::Vector3::new(normal(noise.center), normal(noise.center), normal(noise.center));
        let (w, l, h) = obj.state.dims();
        let mut dim = |d: f64| (d + normal(noise.dims)).max(1e-3);
        let dims = (dim(w), dim(l), dim(h));
        let yaw = obj.state.yaw() + normal(noise.yaw);
        let sig = &signatures.iter().find(|s| s.0 == obj.identity).expect("signature per identity").1;
        let per_dim = noise.embedding / (sig.dim() as f64).sqrt();
        let noisy: Vec<f64> = sig.values().iter().map(|s| s + normal(per_dim)).collect();
        let vis = truth.visibility_of(index);
        let confidence = if vis.is_empty() { 0.0 } else { vis.iter().map(|v| v.value).sum::<f64>() / vis.len() as f64 };
        if !keep || confidence < noise.min_visibility {
            continue;
        }
        let state = ObjectState3D::new(center, dims, yaw, obj.state.velocity()).expect("finite perturbation");
        out.push(LabeledDetection {
            identity: obj.identity,
            detection: Detection {
                state,
                embedding: Some(Embedding::normalize(noisy).unwrap_or_else(|_| sig.clone())),
                confidence: confidence.clamp(0.0, 1.0),
                per_camera_visibility: vis,
            },
        });
    }
    out
}

/// Everything generated for one frame.
#[derive(Debug, Clone)]
pub struct SimFrame {
    pub truth: FrameTruth,
    pub detections: Vec<LabeledDetection>,
    /// One pyramid per camera, in configuration order; empty unless requested.
    pub pyramids: Vec<FeaturePyramid>,
}

impl SimFrame {
    pub fn detection_frame(&self) -> DetectionFrame {
        DetectionFrame {
            frame: self.truth.frame,
            time: self.truth.time,
            detections: self.detections.iter().map(|d| d.detection.clone()).collect(),
        }
    }
}

/// A validated scene ready to generate frames.
pub struct Simulator {
    cfg: SceneConfig,
    occluders: Vec<ObjectState3D>,
    signatures: Vec<(u64, Embedding)>,
}

impl Simulator {
    pub fn new(cfg: SceneConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let occluders = cfg.occluders.iter().map(Occluder::state).collect::<Result<_, _>>()?;
        let signatures =
            cfg.objects.iter().map(|o| (o.identity, signature(cfg.seed, o.identity, cfg.pyramid.channels))).collect();
        Ok(Self { cfg, occluders, signatures })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cfg.cameras
    }

    pub fn signatures(&self) -> &[(u64, Embedding)] {
        &self.signatures
    }

    pub fn frame_count(&self) -> usize {
        self.cfg.frame_count()
    }

    pub fn truth(&self, frame: usize) -> FrameTruth {
        let time = self.cfg.frame_time(frame);
        let objects: Vec<ObjectTruth> = self
            .cfg
            .objects
            .iter()
            .filter_map(|o| {
                o.state_at(time).map(|state| ObjectTruth { identity: o.identity, category: o.category.clone(), state })
            })
            .collect();
        let mut visibility = Vec::with_capacity(self.cfg.cameras.len() * objects.len());
        for cam in &self.cfg.cameras {
            for (i, obj) in objects.iter().enumerate() {
                let blockers: Vec<ObjectState3D> = objects
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| o.state)
                    .chain(self.occluders.iter().copied())
                    .collect();
                let v = visible_fraction(cam, &obj.state, &blockers, self.cfg.visibility_grid).expect("grid validated").value;
                visibility.push(VisibilityScore { camera_id: cam.id(), object_id: obj.identity, value: v });
            }
        }
        FrameTruth { frame, time, objects, visibility }
    }

    pub fn paint(&self, truth: &FrameTruth) -> Vec<FeaturePyramid> {
        let objects: Vec<(ObjectState3D, &[f64])> = truth
            .objects
            .iter()
            .map(|o| {
                let sig = &self.signatures.iter().find(|s| s.0 == o.identity).expect("known identity").1;
                (o.state, sig.values())
            })
            .collect();
        self.cfg
            .cameras
            .iter()
            .enumerate()
            .map(|(ci, cam)| {
                let mut rng = substream(self.cfg.seed, "paint", (truth.frame * self.cfg.cameras.len() + ci) as u64);
                paint_pyramid(cam, &self.cfg.pyramid, &objects, &self.occluders, &mut rng)
            })
            .collect()
    }

    pub fn frame(&self, frame: usize, with_pyramids: bool) -> SimFrame {
        let truth = self.truth(frame);
        let detections = detections_from_truth(&truth, &self.signatures, &self.cfg.noise, self.cfg.seed);
        let pyramids = if with_pyramids { self.paint(&truth) } else { Vec::new() };
        SimFrame { truth, detections, pyramids }
    }

    /// Frames `range`, generated in parallel on the current rayon pool and returned in order.
    pub fn frames(&self, range: std::ops::Range<usize>, with_pyramids: bool) -> Vec<SimFrame> {
        range.into_par_iter().map(|k| self.frame(k, with_pyramids)).collect()
    }

    /// Ground-truth tracks: identity as track id, confidence 1.
    pub fn ground_truth_tracks(truths: &[FrameTruth]) -> TrajectorySet {
        TrajectorySet {
            frames: truths
                .iter()
                .map(|t| {
                    t.objects.iter().map(|o| TrackRecord { track_id: o.identity, state: o.state, confidence: 1.0 }).collect()
                })
                .collect(),
        }
    }
}

/// Gallery: each identity's first detection embedding; probes: every later one.
pub fn reid_split(frames: &[SimFrame]) -> (Vec<LabeledEmbedding>, Vec<LabeledEmbedding>) {
    let mut gallery: Vec<LabeledEmbedding> = Vec::new();
    let mut probes = Vec::new();
    for f in frames {
        for d in &f.detections {
            let Some(e) = &d.detection.embedding else { continue };
            let item = LabeledEmbedding { identity: d.identity, frame: Some(f.truth.frame), embedding: e.clone() };
            if gallery.iter().any(|g| g.identity == d.identity) {
                probes.push(item);
            } else {
                gallery.push(item);
            }
        }
    }
    (gallery, probes)
}
