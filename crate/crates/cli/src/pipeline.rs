//! End-to-end runs: simulate, embed, track and evaluate from one configuration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use outsidein_core::metrics::{evaluate_hota, HotaReport};
use outsidein_core::oae::{object_embedding, OaeError, DEFAULT_V_FLOOR};
use outsidein_core::simulator::{
    write_pyramid_frame, write_pyramid_header, FrameTruth, LabeledEmbedding, SceneConfig, SimFrame, Simulator,
};
use outsidein_core::tracker::{run_sequence, DetectionFrame, TrackerParams};
use outsidein_core::TrajectorySet;

use crate::error::{internal, validation, CliResult};

pub const PIPELINE_SCHEMA_VERSION: u32 = 1;

/// Frames simulated per parallel batch; bounds the number of pyramids alive at once.
const BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Sampled from the painted pyramids at each detection's keypoints and fused across cameras.
    #[default]
    Oae,
    /// The simulator's noisy signature embeddings.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OaeSettings {
    /// Learned keypoints as offsets in box units, appended to the fixed ones.
    pub learned_offsets: Vec<[f64; 3]>,
    pub v_floor: f64,
}

impl Default for OaeSettings {
    fn default() -> Self {
        Self { learned_offsets: Vec::new(), v_floor: DEFAULT_V_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub scene: SceneConfig,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub embedding_source: EmbeddingSource,
    #[serde(default)]
    pub oae: OaeSettings,
    /// Also store the painted pyramids.
    #[serde(default)]
    pub write_pyramids: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != PIPELINE_SCHEMA_VERSION {
            return Err(validation(format!(
                "pipeline schema_version {} is not supported (expected {PIPELINE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scene.validate().map_err(validation)?;
        self.tracker.validate().map_err(validation)?;
        if !(self.oae.v_floor >= 0.0 && self.oae.v_floor.is_finite()) {
            return Err(validation(format!("oae.v_floor must be non-negative, got {}", self.oae.v_floor)));
        }
        Ok(())
    }
}

/// Simulated sequence with the detections the tracker consumes.
pub struct Sequence {
    pub truths: Vec<FrameTruth>,
    pub detections: Vec<DetectionFrame>,
    /// Identity behind each detection, parallel to `detections`.
    pub identities: Vec<Vec<u64>>,
}

impl Sequence {
    pub fn ground_truth(&self) -> TrajectorySet {
        Simulator::ground_truth_tracks(&self.truths)
    }

    /// Gallery: each identity's first embedded detection; probes: every later one.
    pub fn reid_split(&self) -> (Vec<LabeledEmbedding>, Vec<LabeledEmbedding>) {
        let mut gallery: Vec<LabeledEmbedding> = Vec::new();
        let mut probes = Vec::new();
        for (frame, ids) in self.detections.iter().zip(&self.identities) {
            for (det, &identity) in frame.detections.iter().zip(ids) {
                let Some(e) = &det.embedding else { continue };
                let item = LabeledEmbedding { identity, frame: Some(frame.frame), embedding: e.clone() };
                if gallery.iter().any(|g| g.identity == identity) {
                    probes.push(item);
                } else {
                    gallery.push(item);
                }
            }
        }
        (gallery, probes)
    }
}

/// Replaces each detection's embedding by the visibility-weighted fusion of its per-camera
/// keypoint features. Detections occluded in every camera get no embedding.
pub fn embed_frame(frame: &SimFrame, sim: &Simulator, oae: &OaeSettings) -> CliResult<DetectionFrame> {
    let mut out = frame.detection_frame();
    let descriptor = vec![0.0; sim.config().pyramid.channels];
    for det in &mut out.detections {
        det.embedding = match object_embedding(
            sim.cameras(),
            &frame.pyramids,
            &det.state,
            &det.per_camera_visibility,
            &descriptor,
            &oae.learned_offsets,
            oae.v_floor,
        ) {
            Ok(e) => Some(e),
            Err(OaeError::AllOccluded { .. } | OaeError::ZeroNorm) => None,
            Err(e) => return Err(internal(e)),
        };
    }
    Ok(out)
}

/// Generates every frame. Pyramids are painted only when needed and, when `pyramid_sink` is
/// given, streamed to it in the archive layout.
pub fn simulate(cfg: &PipelineConfig, mut pyramid_sink: Option<&mut dyn Write>) -> CliResult<Sequence> {
    let sim = Simulator::new(cfg.scene.clone()).map_err(validation)?;
    let n = sim.frame_count();
    let paint = cfg.embedding_source == EmbeddingSource::Oae || pyramid_sink.is_some();
    if let Some(w) = pyramid_sink.as_deref_mut() {
        write_pyramid_header(w, n, sim.cameras(), &cfg.scene.pyramid).map_err(internal)?;
    }
    let mut truths = Vec::with_capacity(n);
    let mut detections = Vec::with_capacity(n);
    let mut identities = Vec::with_capacity(n);
    for start in (0..n).step_by(BATCH) {
        let frames = sim.frames(start..(start + BATCH).min(n), paint);
        let dets: Vec<DetectionFrame> = match cfg.embedding_source {
            EmbeddingSource::Synthetic => frames.iter().map(SimFrame::detection_frame).collect(),
            EmbeddingSource::Oae => {
                use rayon::prelude::*;
                frames.par_iter().map(|f| embed_frame(f, &sim, &cfg.oae)).collect::<CliResult<_>>()?
            }
        };
        for f in frames {
            if let Some(w) = pyramid_sink.as_deref_mut() {
                write_pyramid_frame(w, &f.pyramids).map_err(internal)?;
            }
            identities.push(f.detections.iter().map(|d| d.identity).collect());
            truths.push(f.truth);
        }
        detections.extend(dets);
    }
    Ok(Sequence { truths, detections, identities })
}

/// Tracks and scores one sequence; both track sets are padded to the sequence length.
pub fn track_and_evaluate(seq: &Sequence, params: &TrackerParams) -> CliResult<(TrajectorySet, HotaReport)> {
    let mut tracks = run_sequence(&seq.detections, params).map_err(validation)?;
    let mut gt = seq.ground_truth();
    let n = seq.truths.len().max(tracks.len());
    tracks.pad_to(n);
    gt.pad_to(n);
    let report = evaluate_hota(&gt, &tracks).map_err(internal)?;
    Ok((tracks, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub loc_a: f64,
}

/// Same sequence associated with appearance (`on`) and with `alpha_emb = 0` (`off`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub on: HotaReport,
    pub off: HotaReport,
    /// `on - off`.
    pub delta: MetricDelta,
}

pub struct AblationRun {
    pub tracks_on: TrajectorySet,
    pub tracks_off: TrajectorySet,
    pub report: AblationReport,
}

pub fn ablation(seq: &Sequence, params: &TrackerParams) -> CliResult<AblationRun> {
    let (tracks_on, on) = track_and_evaluate(seq, params)?;
    let off_params = TrackerParams { alpha_emb: 0.0, ..*params };
    let (tracks_off, off) = track_and_evaluate(seq, &off_params)?;
    let delta = MetricDelta {
        hota: on.hota - off.hota,
        det_a: on.det_a - off.det_a,
        ass_a: on.ass_a - off.ass_a,
        loc_a: on.loc_a - off.loc_a,
    };
    Ok(AblationRun { tracks_on, tracks_off, report: AblationReport { on, off, delta } })
}
