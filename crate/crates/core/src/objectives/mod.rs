//! Supervision terms (box, depth, visibility, identity) with analytic gradients, their weighted
//! sum, and a finite-difference checker ([`gradcheck`]).

pub mod gradcheck;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ObjectState3D;

/// Clamp applied to visibility predictions before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;

/// Radius for pairing predictions with ground truth before computing losses.
pub const MATCH_RADIUS: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("{pred} predictions but {gt} targets")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("target depth {value} at {index} is not positive")]
    NonPositiveGt { index: usize, value: f64 },
    #[error("class {index} out of range for {classes} logits")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("loss weight {name} = {value} must be finite and non-negative")]
    InvalidWeight { name: &'static str, value: f64 },
}

/// A scalar loss with its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossGrad {
    pub fn zero(len: usize) -> Self {
        Self { value: 0.0, grad: vec![0.0; len] }
    }
}

/// Huber with unit threshold: `r^2 / 2` inside `[-1, 1]`, `|r| - 1/2` outside. Returns value and
/// derivative.
pub fn smooth_l1(r: f64) -> (f64, f64) {
    if r.abs() < 1.0 {
        (0.5 * r * r, r)
    } else {
        (r.abs() - 0.5, r.signum())
    }
}

/// Smooth-L1 over center, dimensions and velocity plus smooth-L1 on the sine and cosine yaw
/// residuals. The gradient follows the `x, y, z, w, l, h, yaw, vx, vy, vz` layout.
pub fn box_loss(pred: &ObjectState3D, gt: &ObjectState3D) -> LossGrad {
    box_loss_params(&pred.params(), &gt.params())
}

pub(crate) fn box_loss_params(p: &[f64; 10], g: &[f64; 10]) -> LossGrad {
    let mut out = LossGrad::zero(10);
    for i in (0..10).filter(|&i| i != 6) {
        let (v, d) = smooth_l1(p[i] - g[i]);
        out.value += v;
        out.grad[i] = d;
    }
    let (sp, cp) = p[6].sin_cos();
    let (sg, cg) = g[6].sin_cos();
    let (vs, ds) = smooth_l1(sp - sg);
    let (vc, dc) = smooth_l1(cp - cg);
    out.value += vs + vc;
    out.grad[6] = ds * cp - dc * sp;
    out
}

/// Mean binary cross-entropy; predictions are clamped to `[eps, 1 - eps]` and the clamp's zero
/// derivative is propagated.
pub fn visibility_loss(pred: &[f64], gt: &[f64]) -> Result<LossGrad, ObjectiveError> {
    if pred.len() != gt.len() {
        return Err(ObjectiveError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    if pred.iter().chain(gt).any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonFinite("visibility"));
    }
    let n = pred.len().max(1) as f64;
    let mut out = LossGrad::zero(pred.len());
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        let pc = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        out.value -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
        if pc == p {
            out.grad[i] = (-g / pc + (1.0 - g) / (1.0 - pc)) / n;
        }
    }
    out.value /= n;
    Ok(out)
}

/// Softmax cross-entropy; the gradient is `softmax(logits) - onehot(gt)`.
pub fn id_loss(logits: &[f64], gt: usize) -> Result<LossGrad, ObjectiveError> {
    if logits.len() < 2 {
        return Err(ObjectiveError::TooFewClasses(logits.len()));
    }
    if gt >= logits.len() {
        return Err(ObjectiveError::IndexOutOfRange { index: gt, classes: logits.len() });
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(ObjectiveError::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let value = z.ln() - (logits[gt] - max);
    let mut grad: Vec<f64> = exp.iter().map(|e| e / z).collect();
    grad[gt] -= 1.0;
    Ok(LossGrad { value: value.max(0.0), grad })
}

/// Mean smooth-L1 over depth residuals.
pub fn depth_loss(pred: &[f64], gt: &[f64]) -> Result<LossGrad, ObjectiveError> {
    if pred.len() != gt.len() {
        return Err(ObjectiveError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    if let Some((index, &value)) = gt.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
        return Err(ObjectiveError::NonPositiveGt { index, value });
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonFinite("depth"));
    }
    let n = pred.len().max(1) as f64;
    let mut out = LossGrad::zero(pred.len());
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let (v, d) = smooth_l1(p - g);
        out.value += v;
        out.grad[i] = d / n;
    }
    out.value /= n;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_box: f64,
    pub lambda_depth: f64,
    pub lambda_vis: f64,
    pub lambda_id: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_box: 0.25, lambda_depth: 0.2, lambda_vis: 1.0, lambda_id: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (name, value) in [
            ("lambda_box", self.lambda_box),
            ("lambda_depth", self.lambda_depth),
            ("lambda_vis", self.lambda_vis),
            ("lambda_id", self.lambda_id),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ObjectiveError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    #[serde(rename = "box")]
    pub box_: LossGrad,
    pub depth: LossGrad,
    pub vis: LossGrad,
    pub id: LossGrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(rename = "box")]
    pub box_: f64,
    pub depth: f64,
    pub vis: f64,
    pub id: f64,
    pub total: f64,
    /// Component gradients scaled by their weights.
    pub gradients: LossGradients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGradients {
    #[serde(rename = "box")]
    pub box_: Vec<f64>,
    pub depth: Vec<f64>,
    pub vis: Vec<f64>,
    pub id: Vec<f64>,
}

/// `lambda_box * box + lambda_depth * depth + lambda_vis * vis + lambda_id * id`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<LossReport, ObjectiveError> {
    w.validate()?;
    let scale = |g: &[f64], l: f64| g.iter().map(|v| v * l).collect::<Vec<f64>>();
    Ok(LossReport {
        box_: c.box_.value,
        depth: c.depth.value,
        vis: c.vis.value,
        id: c.id.value,
        total: w.lambda_box * c.box_.value
            + w.lambda_depth * c.depth.value
            + w.lambda_vis * c.vis.value
            + w.lambda_id * c.id.value,
        gradients: LossGradients {
            box_: scale(&c.box_.grad, w.lambda_box),
            depth: scale(&c.depth.grad, w.lambda_depth),
            vis: scale(&c.vis.grad, w.lambda_vis),
            id: scale(&c.id.grad, w.lambda_id),
        },
    })
}

/// Pairs predictions with targets, closest centers first, within `radius`. Returns
/// `(pred, gt)` index pairs; ties go to the lower prediction then target index.
pub fn match_for_loss(pred: &[ObjectState3D], gt: &[ObjectState3D], radius: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = (p.center() - g.center()).norm();
            if d <= radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gt.len()]);
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use std::f64::consts::TAU;

    fn state(p: [f64; 10]) -> ObjectState3D {
        ObjectState3D::from_params(p).unwrap()
    }

    const GT: [f64; 10] = [1.0, 2.0, 0.5, 0.6, 4.0, 1.5, 0.3, 1.0, -1.0, 0.0];

    #[test]
    fn box_loss_huber_branches() {
        let l = box_loss(&state(GT), &state(GT));
        assert_eq!(l.value, 0.0);
        assert!(l.grad.iter().all(|g| *g == 0.0));
        let mut p = GT;
        p[0] += 0.5;
        assert!((box_loss(&state(p), &state(GT)).value - 0.125).abs() < 1e-15);
        p[0] = GT[0] + 2.0;
        let l = box_loss(&state(p), &state(GT));
        assert!((l.value - 1.5).abs() < 1e-15);
        assert_eq!(l.grad[0], 1.0);
    }

    #[test]
    fn box_loss_yaw_period() {
        let mut p = GT;
        p[6] = 1.2;
        let mut shifted = GT;
        shifted[6] += TAU;
        let a = box_loss_params(&p, &GT);
        let b = box_loss_params(&p, &shifted);
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn bce_values() {
        assert!(visibility_loss(&[0.0, 1.0], &[0.0, 1.0]).unwrap().value <= 1e-6);
        assert!((visibility_loss(&[0.5], &[1.0]).unwrap().value - 2f64.ln()).abs() < 1e-12);
        assert_eq!(visibility_loss(&[0.5], &[]), Err(ObjectiveError::LengthMismatch { pred: 1, gt: 0 }));
    }

    #[test]
    fn cross_entropy_values() {
        assert!((id_loss(&[0.3; 4], 2).unwrap().value - 4f64.ln()).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let v = id_loss(&[0.0, k as f64, 0.0], 1).unwrap().value;
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-7);
        assert_eq!(id_loss(&[0.0, 1.0], 2), Err(ObjectiveError::IndexOutOfRange { index: 2, classes: 2 }));
        assert_eq!(id_loss(&[0.0], 0), Err(ObjectiveError::TooFewClasses(1)));
        let g = id_loss(&[1.0, 2.0, 3.0], 0).unwrap().grad;
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn depth_values() {
        assert_eq!(depth_loss(&[3.0, 4.0], &[3.0, 4.0]).unwrap().value, 0.0);
        for n in [1, 5, 17] {
            let gt = vec![2.0; n];
            let pred = vec![2.5; n];
            assert!((depth_loss(&pred, &gt).unwrap().value - 0.125).abs() < 1e-15);
        }
        assert_eq!(depth_loss(&[1.0], &[0.0]), Err(ObjectiveError::NonPositiveGt { index: 0, value: 0.0 }));
        assert!(matches!(depth_loss(&[1.0], &[1.0, 2.0]), Err(ObjectiveError::LengthMismatch { .. })));
    }

    fn components(values: [f64; 4]) -> LossComponents {
        let lg = |v: f64| LossGrad { value: v, grad: vec![v, -v] };
        LossComponents { box_: lg(values[0]), depth: lg(values[1]), vis: lg(values[2]), id: lg(values[3]) }
    }

    #[test]
    fn weighted_total() {
        let w = LossWeights { lambda_box: 1.0, lambda_depth: 1.0, lambda_vis: 1.0, lambda_id: 1.0 };
        assert!((total_loss(&components([0.2, 0.1, 0.3, 0.4]), &w).unwrap().total - 1.0).abs() < 1e-15);
        let w = LossWeights { lambda_depth: 0.0, ..w };
        let r = total_loss(&components([0.2, 0.1, 0.3, 0.4]), &w).unwrap();
        assert_eq!(r.gradients.depth, vec![0.0, 0.0]);
        assert!(total_loss(&components([0.0; 4]), &LossWeights { lambda_id: -1.0, ..w }).is_err());
    }

    #[test]
    fn greedy_matching() {
        let at = |x: f64| ObjectState3D::stationary(Vector3::new(x, 0.0, 0.0), (1.0, 1.0, 1.0), 0.0).unwrap();
        let pred = [at(0.0), at(1.0), at(10.0)];
        let gt = [at(0.9), at(0.2), at(20.0)];
        assert_eq!(match_for_loss(&pred, &gt, MATCH_RADIUS), vec![(1, 0), (0, 1)]);
    }
}
