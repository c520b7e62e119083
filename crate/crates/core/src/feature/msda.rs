use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeaturePyramid};

/// One deformable sampling location: where to read and how much it counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleTuple {
    pub camera_id: u32,
    pub level: usize,
    /// Column coordinate in cells.
    pub u: f32,
    /// Row coordinate in cells.
    pub v: f32,
    pub weight: f32,
}

impl SampleTuple {
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.camera_id
            .cmp(&other.camera_id)
            .then(self.level.cmp(&other.level))
            .then(self.v.total_cmp(&other.v))
            .then(self.u.total_cmp(&other.u))
            .then(self.weight.total_cmp(&other.weight))
    }
}

/// Per-query lists of sample tuples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub queries: Vec<Vec<SampleTuple>>,
}

impl SamplePlan {
    pub fn new(queries: Vec<Vec<SampleTuple>>) -> Self {
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Aggregated `C`-vectors, one per query, plus a flag for queries whose plan was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdaOutput {
    pub channels: usize,
    pub values: Vec<f32>,
    pub empty: Vec<bool>,
}

impl MsdaOutput {
    pub(crate) fn zeros(queries: usize, channels: usize) -> Self {
        Self { channels, values: vec![0.0; queries * channels], empty: vec![false; queries] }
    }

    pub fn query(&self, q: usize) -> &[f32] {
        &self.values[q * self.channels..(q + 1) * self.channels]
    }

    pub fn len(&self) -> usize {
        self.empty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty.is_empty()
    }
}

/// Camera id to pyramid index, validated once per call.
pub(crate) struct PyramidIndex {
    ids: Vec<(u32, usize)>,
    level_counts: Vec<usize>,
    pub channels: usize,
}

impl PyramidIndex {
    pub fn new(pyrs: &[FeaturePyramid]) -> Result<Self, FeatureError> {
        let channels = pyrs.first().map_or(0, |p| p.channels());
        let mut ids = Vec::with_capacity(pyrs.len());
        for (i, p) in pyrs.iter().enumerate() {
            if p.channels() != channels {
                return Err(FeatureError::ChannelMismatch { expected: channels, found: p.channels() });
            }
            ids.push((p.camera_id(), i));
        }
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(FeatureError::DuplicateCamera(w[0].0));
        }
        let level_counts = pyrs.iter().map(|p| p.levels().len()).collect();
        Ok(Self { ids, level_counts, channels })
    }

    pub fn get(&self, camera_id: u32) -> Option<usize> {
        self.ids.binary_search_by_key(&camera_id, |e| e.0).ok().map(|i| self.ids[i].1)
    }
}

/// Checks cameras, levels and weights of every tuple.
pub(crate) fn validate_plan(index: &PyramidIndex, plan: &SamplePlan) -> Result<(), FeatureError> {
    for (q, tuples) in plan.queries.iter().enumerate() {
        let mut total = 0.0f32;
        for (s, t) in tuples.iter().enumerate() {
            let p = index.get(t.camera_id).ok_or(FeatureError::UnknownCamera(t.camera_id))?;
            let available = index.level_counts[p];
            if t.level >= available {
                return Err(FeatureError::LevelOutOfRange { camera: t.camera_id, level: t.level, available });
            }
            if !t.weight.is_finite() {
                return Err(FeatureError::NonFiniteWeight { query: q, sample: s });
            }
            if t.weight < 0.0 {
                return Err(FeatureError::NegativeWeight { query: q, sample: s, weight: t.weight });
            }
            total += t.weight;
        }
        if !tuples.is_empty() && !(total > 0.0 && total.is_finite()) {
            return Err(FeatureError::ZeroWeightSum { query: q });
        }
    }
    Ok(())
}

/// Tuples of one query in canonical order: by camera, level, row, column, weight.
/// Summing in this order makes results independent of the caller's tuple order.
pub(crate) fn canonical(tuples: &[SampleTuple]) -> Vec<SampleTuple> {
    let mut sorted = tuples.to_vec();
    sorted.sort_by(SampleTuple::canonical_cmp);
    sorted
}

/// Sum of weights in canonical order.
pub(crate) fn weight_sum(sorted: &[SampleTuple]) -> f32 {
    sorted.iter().fold(0.0f32, |acc, t| acc + t.weight)
}

/// Reference multi-scale deformable aggregation in 32-bit floats.
///
/// For each query, `out = sum_t (w_t / sum w) * bilinear(camera_t, level_t, u_t, v_t)`.
/// Queries with an empty plan produce zeros and are flagged in [`MsdaOutput::empty`].
pub fn msda_reference(pyrs: &[FeaturePyramid], plan: &SamplePlan) -> Result<MsdaOutput, FeatureError> {
    let index = PyramidIndex::new(pyrs)?;
    validate_plan(&index, plan)?;
    let channels = index.channels;
    let mut out = MsdaOutput::zeros(plan.len(), channels);
    for (q, tuples) in plan.queries.iter().enumerate() {
        if tuples.is_empty() {
            out.empty[q] = true;
            continue;
        }
        let sorted = canonical(tuples);
        let total = weight_sum(&sorted);
        let acc = &mut out.values[q * channels..(q + 1) * channels];
        for t in &sorted {
            let pyr = &pyrs[index.get(t.camera_id).expect("validated")];
            let sample = pyr.levels()[t.level].sample(t.u, t.v);
            let w = t.weight / total;
            for c in 0..channels {
                acc[c] += w * sample[c];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::FeatureLevel;

    fn pyramids() -> Vec<FeaturePyramid> {
        let level = |h: usize, w: usize, stride: f64, seed: f32| {
            let values = (0..h * w * 4).map(|i| ((i as f32) * 0.37 + seed).sin()).collect();
            FeatureLevel::new(h, w, 4, stride, values).unwrap()
        };
        vec![
            FeaturePyramid::new(3, vec![level(6, 8, 4.0, 0.1), level(3, 4, 8.0, 0.2)]).unwrap(),
            FeaturePyramid::new(9, vec![level(6, 8, 4.0, 0.3), level(3, 4, 8.0, 0.4)]).unwrap(),
        ]
    }

    fn tuple(camera_id: u32, level: usize, u: f32, v: f32, weight: f32) -> SampleTuple {
        SampleTuple { camera_id, level, u, v, weight }
    }

    #[test]
    fn single_tuple_at_cell_center_reads_the_cell() {
        let p = pyramids();
        let plan = SamplePlan::new(vec![vec![tuple(9, 1, 2.0, 1.0, 1.0)]]);
        let out = msda_reference(&p, &plan).unwrap();
        assert_eq!(out.query(0), p[1].levels()[1].cell(2, 1));
        assert!(!out.empty[0]);
    }

    #[test]
    fn equal_weights_average_two_samples() {
        let p = pyramids();
        let plan = SamplePlan::new(vec![vec![tuple(3, 0, 1.0, 1.0, 0.25), tuple(9, 0, 5.0, 2.0, 0.25)]]);
        let out = msda_reference(&p, &plan).unwrap();
        let a = p[0].levels()[0].cell(1, 1);
        let b = p[1].levels()[0].cell(5, 2);
        for c in 0..4 {
            assert!((out.query(0)[c] - (a[c] + b[c]) / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_plan_is_zero_and_flagged() {
        let p = pyramids();
        let plan = SamplePlan::new(vec![vec![], vec![tuple(3, 0, 1.0, 1.0, 2.0)]]);
        let out = msda_reference(&p, &plan).unwrap();
        assert_eq!(out.query(0), &[0.0; 4]);
        assert_eq!(out.empty, vec![true, false]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = pyramids();
        let run = |t: SampleTuple| msda_reference(&p, &SamplePlan::new(vec![vec![t]])).unwrap_err();
        assert_eq!(run(tuple(4, 0, 0.0, 0.0, 1.0)), FeatureError::UnknownCamera(4));
        assert!(matches!(run(tuple(3, 2, 0.0, 0.0, 1.0)), FeatureError::LevelOutOfRange { level: 2, .. }));
        assert!(matches!(run(tuple(3, 0, 0.0, 0.0, f32::NAN)), FeatureError::NonFiniteWeight { .. }));
        assert!(matches!(run(tuple(3, 0, 0.0, 0.0, f32::INFINITY)), FeatureError::NonFiniteWeight { .. }));
        assert!(matches!(run(tuple(3, 0, 0.0, 0.0, -1.0)), FeatureError::NegativeWeight { .. }));
        assert!(matches!(run(tuple(3, 0, 0.0, 0.0, 0.0)), FeatureError::ZeroWeightSum { query: 0 }));
        let mut dup = pyramids();
        dup[1] = FeaturePyramid::new(3, dup[1].levels().to_vec()).unwrap();
        assert_eq!(msda_reference(&dup, &SamplePlan::default()).unwrap_err(), FeatureError::DuplicateCamera(3));
    }
}
