//! Per-frame track records and their newline-delimited JSON form.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, ObjectState3D};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    InvalidState { line: usize, source: GeometryError },
    #[error("line {line}: confidence {value} outside [0, 1]")]
    Confidence { line: usize, value: f64 },
    #[error("frame {frame}: duplicate track id {track_id}")]
    DuplicateTrack { frame: usize, track_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub track_id: u64,
    pub state: ObjectState3D,
    pub confidence: f64,
}

/// One line of the serialized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    frame: usize,
    track_id: u64,
    x: f64,
    y: f64,
    z: f64,
    w: f64,
    l: f64,
    h: f64,
    yaw: f64,
    confidence: f64,
}

/// Track records for consecutive frames, indexed from 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySet {
    pub frames: Vec<Vec<TrackRecord>>,
}

impl TrajectorySet {
    pub fn new(frames: Vec<Vec<TrackRecord>>) -> Result<Self, TrajectoryError> {
        for (frame, records) in frames.iter().enumerate() {
            let mut seen = HashSet::new();
            for r in records {
                if !seen.insert(r.track_id) {
                    return Err(TrajectoryError::DuplicateTrack { frame, track_id: r.track_id });
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Appends empty frames until there are at least `n`.
    pub fn pad_to(&mut self, n: usize) {
        if self.frames.len() < n {
            self.frames.resize(n, Vec::new());
        }
    }

    pub fn track_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.frames.iter().flatten().map(|r| r.track_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// One JSON object per record, frames in order, records in stored order. Velocity is not
    /// part of the format.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for (frame, records) in self.frames.iter().enumerate() {
            for r in records {
                let c = r.state.center();
                let (w, l, h) = r.state.dims();
                let line = Line {
                    frame,
                    track_id: r.track_id,
                    x: c.x,
                    y: c.y,
                    z: c.z,
                    w,
                    l,
                    h,
                    yaw: r.state.yaw(),
                    confidence: r.confidence,
                };
                out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
                out.push('\n');
            }
        }
        out
    }

    /// Parses the form written by [`to_ndjson`](Self::to_ndjson). Blank lines are skipped;
    /// frames are sized to the largest index seen, and loaded states have zero velocity.
    pub fn from_ndjson(text: &str) -> Result<Self, TrajectoryError> {
        let mut frames: Vec<Vec<TrackRecord>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|source| TrajectoryError::Parse { line: line_no, source })?;
            if !(0.0..=1.0).contains(&line.confidence) {
                return Err(TrajectoryError::Confidence { line: line_no, value: line.confidence });
            }
            let state =
                ObjectState3D::new(Vector3::new(line.x, line.y, line.z), (line.w, line.l, line.h), line.yaw, Vector3::zeros())
                    .map_err(|source| TrajectoryError::InvalidState { line: line_no, source })?;
            if frames.len() <= line.frame {
                frames.resize(line.frame + 1, Vec::new());
            }
            frames[line.frame].push(TrackRecord { track_id: line.track_id, state, confidence: line.confidence });
        }
        Self::new(frames)
    }
}
