//! Online multi-object tracking over per-frame detections.
//!
//! Each frame runs predict (constant-velocity propagation of every live query), associate
//! (optimal gated assignment on a blend of appearance and center distance) and update (state
//! replacement, velocity refinement, memory blending, births and deaths).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::solve_gated;
use crate::geometry::ObjectState3D;
use crate::oae::{l2, Embedding, Query};
use crate::trajectory::{TrackRecord, TrajectorySet};
use crate::visibility::VisibilityScore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame {frame}: time {time} does not come after {previous}")]
    NonMonotonicTimestamps { frame: usize, time: f64, previous: f64 },
    #[error("invalid tracker parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("detection confidence {0} outside [0, 1]")]
    Confidence(f64),
}

/// One detected object. `embedding` is absent when every view was occluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub state: ObjectState3D,
    pub embedding: Option<Embedding>,
    pub confidence: f64,
    #[serde(default)]
    pub per_camera_visibility: Vec<VisibilityScore>,
}

/// Detections of one frame; one JSON object per line in the detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrame {
    pub frame: usize,
    pub time: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerParams {
    /// Meters; centers farther apart cannot be associated.
    pub gate_radius: f64,
    pub alpha_emb: f64,
    pub alpha_geo: f64,
    pub memory_momentum: f64,
    pub birth_conf: f64,
    /// Frames a query may go unmatched before removal.
    pub death_age: u32,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self { gate_radius: 2.0, alpha_emb: 1.0, alpha_geo: 1.0, memory_momentum: 0.9, birth_conf: 0.3, death_age: 5 }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let check = |name, value: f64, ok: bool| if ok { Ok(()) } else { Err(TrackerError::InvalidParam { name, value }) };
        check("gate_radius", self.gate_radius, self.gate_radius > 0.0)?;
        check("alpha_emb", self.alpha_emb, self.alpha_emb >= 0.0 && self.alpha_emb.is_finite())?;
        check("alpha_geo", self.alpha_geo, self.alpha_geo >= 0.0 && self.alpha_geo.is_finite())?;
        check("memory_momentum", self.memory_momentum, (0.0..=1.0).contains(&self.memory_momentum))?;
        check("birth_conf", self.birth_conf, (0.0..=1.0).contains(&self.birth_conf))
    }
}

/// Live queries, kept in increasing track id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryBank {
    pub queries: Vec<Query>,
    pub next_track_id: u64,
    pub frame_time: Option<f64>,
}

/// Advances every anchor by `velocity * dt` and ages every query by one frame.
pub fn predict(bank: &QueryBank, dt: f64) -> QueryBank {
    assert!(dt >= 0.0, "prediction interval must be non-negative, got {dt}");
    let mut out = bank.clone();
    for q in &mut out.queries {
        q.anchor = q.anchor.translated(&(q.anchor.velocity() * dt));
        q.age += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(query index, detection index)`, in query order.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_queries: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

fn pair_cost(q: &Query, d: &Detection, params: &TrackerParams) -> (f64, bool) {
    let dist = (q.anchor.center() - d.state.center()).norm();
    let emb = d.embedding.as_ref().map_or(0.0, |e| l2(q.memory.values(), e.values()));
    let geo = if params.gate_radius.is_finite() { dist / params.gate_radius } else { 0.0 };
    (params.alpha_emb * emb + params.alpha_geo * geo, dist <= params.gate_radius)
}

/// Among matchings of admissible pairs, the one with the most pairs and then least total cost.
pub fn associate(bank: &QueryBank, dets: &[Detection], params: &TrackerParams) -> Association {
    let (rows, cols) = (bank.queries.len(), dets.len());
    let mut costs = Vec::with_capacity(rows * cols);
    let mut admissible = Vec::with_capacity(rows * cols);
    for q in &bank.queries {
        for d in dets {
            let (c, a) = pair_cost(q, d, params);
            costs.push(c);
            admissible.push(a);
        }
    }
    let solution = solve_gated(&costs, &admissible, rows, cols);
    let mut out = Association::default();
    let mut det_used = vec![false; cols];
    for (qi, m) in solution.into_iter().enumerate() {
        match m {
            Some(di) => {
                det_used[di] = true;
                out.pairs.push((qi, di));
            }
            None => out.unmatched_queries.push(qi),
        }
    }
    out.unmatched_detections = (0..cols).filter(|&d| !det_used[d]).collect();
    out
}

/// Applies an association at time `time`. Returns the new bank and the ids of queries that
/// were matched or born, in bank order.
pub fn update(
    bank: &QueryBank,
    assoc: &Association,
    dets: &[Detection],
    params: &TrackerParams,
    time: f64,
) -> (QueryBank, Vec<u64>) {
    let mut out = QueryBank { queries: Vec::new(), next_track_id: bank.next_track_id, frame_time: Some(time) };
    let mut observed = Vec::new();
    let mut matched = vec![None; bank.queries.len()];
    for &(qi, di) in &assoc.pairs {
        matched[qi] = Some(di);
    }
    for (q, m) in bank.queries.iter().zip(matched) {
        let Some(di) = m else {
            if q.age <= params.death_age {
                out.queries.push(q.clone());
            }
            continue;
        };
        let d = &dets[di];
        let (last_center, last_time) = q.last_observed;
        let elapsed = time - last_time;
        let center = d.state.center();
        let velocity =
            if elapsed > 0.0 { (center - last_center) / elapsed * 0.5 + d.state.velocity() * 0.5 } else { d.state.velocity() };
        let memory = match &d.embedding {
            Some(e) => {
                let m = params.memory_momentum;
                let blended = q.memory.values().iter().zip(e.values()).map(|(a, b)| m * a + (1.0 - m) * b).collect();
                // exactly opposite vectors cancel; keep the old memory then
                Embedding::normalize(blended).unwrap_or_else(|_| q.memory.clone())
            }
            None => q.memory.clone(),
        };
        observed.push(q.track_id);
        out.queries.push(Query {
            track_id: q.track_id,
            anchor: d.state.with_velocity(velocity),
            descriptor: memory.values().to_vec(),
            memory,
            confidence: d.confidence,
            age: 0,
            last_observed: (center, time),
        });
    }
    for &di in &assoc.unmatched_detections {
        let d = &dets[di];
        let Some(e) = &d.embedding else { continue };
        if d.confidence < params.birth_conf {
            continue;
        }
        let track_id = out.next_track_id;
        out.next_track_id += 1;
        observed.push(track_id);
        out.queries.push(Query {
            track_id,
            anchor: d.state,
            memory: e.clone(),
            descriptor: e.values().to_vec(),
            confidence: d.confidence,
            age: 0,
            last_observed: (d.state.center(), time),
        });
    }
    (out, observed)
}

/// Tracks a whole sequence. Frame `k` of the result holds the queries matched or born at
/// frame `k`.
pub fn run_sequence(frames: &[DetectionFrame], params: &TrackerParams) -> Result<TrajectorySet, TrackerError> {
    params.validate()?;
    let mut bank = QueryBank::default();
    let mut out = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        if let Some(d) = frame.detections.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
            return Err(TrackerError::Confidence(d.confidence));
        }
        let dt = match bank.frame_time {
            Some(previous) if !(frame.time > previous) => {
                return Err(TrackerError::NonMonotonicTimestamps { frame: k, time: frame.time, previous })
            }
            Some(previous) => frame.time - previous,
            None => 0.0,
        };
        let predicted = predict(&bank, dt);
        let assoc = associate(&predicted, &frame.detections, params);
        let (next, observed) = update(&predicted, &assoc, &frame.detections, params, frame.time);
        bank = next;
        let records = bank
            .queries
            .iter()
            .filter(|q| observed.contains(&q.track_id))
            .map(|q| TrackRecord { track_id: q.track_id, state: q.anchor, confidence: q.confidence })
            .collect();
        out.push(records);
    }
    Ok(TrajectorySet { frames: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::normalize(v.to_vec()).unwrap()
    }

    fn det(x: f64, y: f64, e: &[f64]) -> Detection {
        Detection {
            state: ObjectState3D::stationary(Vector3::new(x, y, 0.5), (0.6, 0.6, 1.7), 0.0).unwrap(),
            embedding: Some(emb(e)),
            confidence: 0.9,
            per_camera_visibility: vec![],
        }
    }

    fn query(id: u64, x: f64, vx: f64, e: &[f64]) -> Query {
        let anchor = ObjectState3D::new(Vector3::new(x, 0.0, 0.5), (0.6, 0.6, 1.7), 0.0, Vector3::new(vx, 0.0, 0.0)).unwrap();
        Query {
            track_id: id,
            anchor,
            memory: emb(e),
            descriptor: e.to_vec(),
            confidence: 1.0,
            age: 0,
            last_observed: (anchor.center(), 0.0),
        }
    }

    fn bank(queries: Vec<Query>) -> QueryBank {
        let next = queries.iter().map(|q| q.track_id + 1).max().unwrap_or(0);
        QueryBank { queries, next_track_id: next, frame_time: Some(0.0) }
    }

    #[test]
    fn prediction_is_linear_in_time() {
        let b = bank(vec![query(0, 1.0, 1.0, &[1.0]), query(1, 5.0, 0.0, &[1.0])]);
        let p = predict(&b, 0.1);
        assert!((p.queries[0].anchor.center().x - 1.1).abs() < 1e-15);
        assert_eq!(p.queries[1].anchor.center().x, 5.0);
        assert_eq!(p.queries[0].age, 1);
        let two = predict(&predict(&b, 0.25), 0.5);
        let one = predict(&b, 0.75);
        assert!((two.queries[0].anchor.center() - one.queries[0].anchor.center()).norm() < 1e-12);
    }

    #[test]
    fn gating() {
        let b = bank(vec![query(0, 0.0, 0.0, &[1.0, 0.0])]);
        let p = TrackerParams::default();
        let a = associate(&b, &[det(0.5, 0.0, &[1.0, 0.0])], &p);
        assert_eq!(a.pairs, vec![(0, 0)]);
        let a = associate(&b, &[det(10.0, 0.0, &[1.0, 0.0])], &p);
        assert!(a.pairs.is_empty());
        assert_eq!((a.unmatched_queries, a.unmatched_detections), (vec![0], vec![0]));
    }

    #[test]
    fn appearance_resolves_a_close_call() {
        let b = bank(vec![query(0, 0.0, 0.0, &[1.0, 0.0]), query(1, 0.4, 0.0, &[0.0, 1.0])]);
        let dets = [det(0.3, 0.0, &[1.0, 0.0]), det(0.1, 0.0, &[0.0, 1.0])];
        let with = associate(&b, &dets, &TrackerParams::default());
        assert_eq!(with.pairs, vec![(0, 0), (1, 1)]);
        let without = associate(&b, &dets, &TrackerParams { alpha_emb: 0.0, ..TrackerParams::default() });
        assert_eq!(without.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn memory_momentum_extremes() {
        let b = bank(vec![query(0, 0.0, 0.0, &[1.0, 0.0])]);
        let dets = [det(0.1, 0.0, &[0.0, 1.0])];
        let a = associate(&b, &dets, &TrackerParams::default());
        let keep = TrackerParams { memory_momentum: 1.0, ..TrackerParams::default() };
        assert_eq!(update(&b, &a, &dets, &keep, 0.1).0.queries[0].memory, emb(&[1.0, 0.0]));
        let replace = TrackerParams { memory_momentum: 0.0, ..TrackerParams::default() };
        assert_eq!(update(&b, &a, &dets, &replace, 0.1).0.queries[0].memory, emb(&[0.0, 1.0]));
    }

    #[test]
    fn velocity_blends_displacement_and_detection() {
        let b = bank(vec![query(0, 0.0, 0.0, &[1.0])]);
        let mut d = det(0.2, 0.0, &[1.0]);
        d.state = d.state.with_velocity(Vector3::new(1.0, 0.0, 0.0));
        let a = associate(&b, std::slice::from_ref(&d), &TrackerParams::default());
        let (next, _) = update(&b, &a, &[d], &TrackerParams::default(), 0.1);
        // displacement 0.2 over 0.1 s is 2 m/s; half of that plus half of 1 m/s
        assert!((next.queries[0].anchor.velocity().x - 1.5).abs() < 1e-12);
    }

    #[test]
    fn queries_die_after_death_age() {
        let p = TrackerParams { death_age: 2, ..TrackerParams::default() };
        let mut frames = vec![DetectionFrame { frame: 0, time: 0.0, detections: vec![det(0.0, 0.0, &[1.0])] }];
        for k in 1..=3 {
            frames.push(DetectionFrame { frame: k, time: k as f64 * 0.1, detections: vec![] });
        }
        frames.push(DetectionFrame { frame: 4, time: 0.4, detections: vec![det(0.0, 0.0, &[1.0])] });
        let t = run_sequence(&frames, &p).unwrap();
        assert_eq!(t.frames[0][0].track_id, 0);
        assert_eq!(t.frames[4][0].track_id, 1, "the old track is gone and its id is not reused");
    }

    #[test]
    fn survives_a_short_gap() {
        let mut frames = Vec::new();
        for k in 0..10 {
            let dets = if (4..7).contains(&k) { vec![] } else { vec![det(0.1 * k as f64, 0.0, &[1.0, 0.0])] };
            frames.push(DetectionFrame { frame: k, time: k as f64 * 0.1, detections: dets });
        }
        let t = run_sequence(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(t.track_ids(), vec![0]);
        assert!(t.frames[5].is_empty());
    }

    #[test]
    fn sequence_edge_cases() {
        assert!(run_sequence(&[], &TrackerParams::default()).unwrap().is_empty());
        let frames = vec![
            DetectionFrame { frame: 0, time: 1.0, detections: vec![] },
            DetectionFrame { frame: 1, time: 1.0, detections: vec![] },
        ];
        assert!(matches!(
            run_sequence(&frames, &TrackerParams::default()),
            Err(TrackerError::NonMonotonicTimestamps { frame: 1, .. })
        ));
        let weak = Detection { confidence: 0.1, ..det(0.0, 0.0, &[1.0]) };
        let frames = vec![DetectionFrame { frame: 0, time: 0.0, detections: vec![weak] }];
        assert!(run_sequence(&frames, &TrackerParams::default()).unwrap().frames[0].is_empty());
    }

    #[test]
    fn params_are_validated() {
        assert!(TrackerParams { memory_momentum: 1.5, ..TrackerParams::default() }.validate().is_err());
        assert!(TrackerParams { gate_radius: 0.0, ..TrackerParams::default() }.validate().is_err());
        assert!(TrackerParams { gate_radius: f64::INFINITY, alpha_geo: 0.0, ..TrackerParams::default() }.validate().is_ok());
        let p: TrackerParams = serde_json::from_str("{\"gate_radius\": 3.0}").unwrap();
        assert_eq!(p.death_age, 5);
        assert!(serde_json::from_str::<TrackerParams>("{\"gate\": 3.0}").is_err());
    }
}
