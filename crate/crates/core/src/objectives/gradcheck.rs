//! Central finite-difference verification of the analytic loss gradients on seeded random
//! instances.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{box_loss_params, depth_loss, id_loss, visibility_loss};
use crate::rng::{substream, Rng};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Coordinates whose residual is this close to the Huber threshold are not checked.
pub const KINK_MARGIN: f64 = 1e-3;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub loss: String,
    pub instances: usize,
    pub coordinates_checked: usize,
    pub coordinates_skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Tally {
    loss: &'static str,
    instances: usize,
    checked: usize,
    skipped: usize,
    worst: f64,
}

impl Tally {
    fn new(loss: &'static str, instances: usize) -> Self {
        Self { loss, instances, checked: 0, skipped: 0, worst: 0.0 }
    }

    fn compare(&mut self, analytic: &[f64], numeric: &[f64], skip: impl Fn(usize) -> bool) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            if skip(i) {
                self.skipped += 1;
            } else {
                self.checked += 1;
                self.worst = self.worst.max(relative_error(*a, *n));
            }
        }
    }

    fn finish(self) -> GradCheck {
        GradCheck {
            loss: self.loss.into(),
            instances: self.instances,
            coordinates_checked: self.checked,
            coordinates_skipped: self.skipped,
            max_rel_error: self.worst,
            tolerance: REL_TOL,
            passed: self.worst <= REL_TOL,
        }
    }
}

fn near_kink(r: f64) -> bool {
    (r.abs() - 1.0).abs() <= KINK_MARGIN
}

pub fn check_box_loss(rng: &mut Rng, instances: usize) -> GradCheck {
    let mut t = Tally::new("box", instances);
    for _ in 0..instances {
        let mut gt = [0.0; 10];
        for (i, g) in gt.iter_mut().enumerate() {
            *g = match i {
                3..=5 => rng.random_range(0.3..5.0),
                6 => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                _ => rng.random_range(-20.0..20.0),
            };
        }
        let mut pred = gt;
        for p in pred.iter_mut() {
            *p += rng.random_range(-2.5..2.5);
        }
        let analytic = box_loss_params(&pred, &gt).grad;
        let numeric = central_difference(|x| box_loss_params(&x.try_into().expect("ten parameters"), &gt).value, &pred, FD_STEP);
        t.compare(&analytic, &numeric, |i| {
            if i == 6 {
                near_kink(pred[6].sin() - gt[6].sin()) || near_kink(pred[6].cos() - gt[6].cos())
            } else {
                near_kink(pred[i] - gt[i])
            }
        });
    }
    t.finish()
}

pub fn check_visibility_loss(rng: &mut Rng, instances: usize) -> GradCheck {
    let mut t = Tally::new("vis", instances);
    for k in 0..instances {
        let n = 16;
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
        let gt: Vec<f64> = (0..n)
            .map(|_| if k % 2 == 0 { f64::from(u8::from(rng.random_bool(0.5))) } else { rng.random_range(0.0..=1.0) })
            .collect();
        let analytic = visibility_loss(&pred, &gt).expect("aligned").grad;
        let numeric = central_difference(|x| visibility_loss(x, &gt).expect("aligned").value, &pred, FD_STEP);
        t.compare(&analytic, &numeric, |_| false);
    }
    t.finish()
}

pub fn check_id_loss(rng: &mut Rng, instances: usize) -> GradCheck {
    let mut t = Tally::new("id", instances);
    for _ in 0..instances {
        let k = 10;
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let gt = rng.random_range(0..k);
        let analytic = id_loss(&logits, gt).expect("valid").grad;
        let numeric = central_difference(|x| id_loss(x, gt).expect("valid").value, &logits, FD_STEP);
        t.compare(&analytic, &numeric, |_| false);
    }
    t.finish()
}

pub fn check_depth_loss(rng: &mut Rng, instances: usize) -> GradCheck {
    let mut t = Tally::new("depth", instances);
    for _ in 0..instances {
        let n = rng.random_range(1..=16);
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..50.0)).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g + rng.random_range(-3.0..3.0)).collect();
        let analytic = depth_loss(&pred, &gt).expect("valid").grad;
        let numeric = central_difference(|x| depth_loss(x, &gt).expect("valid").value, &pred, FD_STEP);
        t.compare(&analytic, &numeric, |i| near_kink(pred[i] - gt[i]));
    }
    t.finish()
}

/// All four checks, each on its own seeded stream.
pub fn run_suite(seed: u64, instances: usize) -> Vec<GradCheck> {
    vec![
        check_box_loss(&mut substream(seed, "gradcheck-box", 0), instances),
        check_depth_loss(&mut substream(seed, "gradcheck-depth", 0), instances),
        check_visibility_loss(&mut substream(seed, "gradcheck-vis", 0), instances),
        check_id_loss(&mut substream(seed, "gradcheck-id", 0), instances),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_of_a_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], FD_STEP);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn suite_passes() {
        for c in run_suite(11, 20) {
            assert!(c.passed, "{c:?}");
            assert!(c.coordinates_checked > 0);
        }
    }
}
