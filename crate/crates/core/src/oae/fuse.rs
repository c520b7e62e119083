use super::{Embedding, OaeError, ViewFeature};
use crate::visibility::VisibilityScore;

/// Total visibility at or below which an object counts as occluded in every view.
pub const DEFAULT_V_FLOOR: f64 = 1e-3;

/// Visibility-weighted mean of the per-view features, before normalization, with the total
/// visibility. Invalid views carry zero weight.
pub fn fused_mean(per_view: &[ViewFeature], vis: &[VisibilityScore]) -> Result<(Vec<f64>, f64), OaeError> {
    if per_view.len() != vis.len() {
        return Err(OaeError::LengthMismatch { views: per_view.len(), scores: vis.len() });
    }
    let Some(first) = per_view.first() else { return Err(OaeError::NoViews) };
    let d = first.values.len();
    if let Some(bad) = per_view.iter().find(|f| f.values.len() != d) {
        return Err(OaeError::DimensionMismatch { expected: d, found: bad.values.len() });
    }
    let mut sum = vec![0.0; d];
    let mut total = 0.0;
    for (f, s) in per_view.iter().zip(vis) {
        let v = if f.valid { s.value } else { 0.0 };
        if v == 0.0 {
            continue;
        }
        total += v;
        for (a, x) in sum.iter_mut().zip(&f.values) {
            *a += v * x;
        }
    }
    if total > 0.0 {
        sum.iter_mut().for_each(|a| *a /= total);
    }
    Ok((sum, total))
}

/// Normalized visibility-weighted fusion. Signals [`OaeError::AllOccluded`] when the total
/// visibility does not exceed `v_floor`; callers then fall back to the query's memory.
pub fn fuse_embedding(per_view: &[ViewFeature], vis: &[VisibilityScore], v_floor: f64) -> Result<Embedding, OaeError> {
    let (mean, total) = fused_mean(per_view, vis)?;
    if !(total > v_floor) {
        return Err(OaeError::AllOccluded { total, floor: v_floor });
    }
    Embedding::normalize(mean)
}
