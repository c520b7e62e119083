use super::OaeError;
use crate::feature::{pixel_to_cell, FeaturePyramid};
use crate::geometry::{CameraModel, KeypointSet};

/// One camera's keypoint-aligned feature for an object. `valid` is false when every keypoint
/// lies behind the camera, in which case `values` is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeature {
    pub values: Vec<f64>,
    pub valid: bool,
}

impl ViewFeature {
    pub fn invalid(dim: usize) -> Self {
        Self { values: vec![0.0; dim], valid: false }
    }
}

/// Samples every pyramid level at each projected keypoint and averages over levels; keypoints
/// are then combined with softmax weights of `descriptor . feature / sqrt(D)`. Keypoints behind
/// the camera are skipped.
pub fn extract_view_feature(
    pyr: &FeaturePyramid,
    cam: &CameraModel,
    kp: &KeypointSet,
    descriptor: &[f64],
) -> Result<ViewFeature, OaeError> {
    let d = descriptor.len();
    if pyr.channels() != d {
        return Err(OaeError::ChannelMismatch { expected: d, found: pyr.channels() });
    }
    let levels = pyr.levels();
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(kp.len());
    for p in kp.points() {
        let Ok(proj) = cam.project(p) else { continue };
        let mut acc = vec![0.0f64; d];
        for level in levels {
            let u = pixel_to_cell(proj.u, level.stride());
            let v = pixel_to_cell(proj.v, level.stride());
            for (a, s) in acc.iter_mut().zip(level.sample(u as f32, v as f32)) {
                *a += s as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= levels.len() as f64);
        features.push(acc);
    }
    if features.is_empty() {
        return Ok(ViewFeature::invalid(d));
    }
    let scale = (d as f64).sqrt().max(1.0);
    let logits: Vec<f64> = features.iter().map(|f| f.iter().zip(descriptor).map(|(a, b)| a * b).sum::<f64>() / scale).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let mut values = vec![0.0; d];
    for (f, e) in features.iter().zip(&exp) {
        let w = e / z;
        for (o, x) in values.iter_mut().zip(f) {
            *o += w * x;
        }
    }
    Ok(ViewFeature { values, valid: true })
}
