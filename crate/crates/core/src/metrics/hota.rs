use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{iou3d, MetricsError};
use crate::assignment;
use crate::trajectory::TrajectorySet;

/// The 19 localization thresholds 0.05, 0.10, ..., 0.95.
pub fn alphas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub loc_a: f64,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaReport {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub loc_a: f64,
    pub per_alpha: Vec<AlphaRow>,
}

impl HotaReport {
    /// One header line and one row per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,hota,det_a,ass_a,loc_a,tp,fn,fp\n");
        for r in &self.per_alpha {
            out.push_str(&format!("{:.2},{},{},{},{},{},{},{}\n", r.alpha, r.hota, r.det_a, r.ass_a, r.loc_a, r.tp, r.fn_, r.fp));
        }
        out
    }
}

/// Per-frame similarity and the dense id indices of its rows and columns.
struct Frame {
    gt: Vec<usize>,
    pred: Vec<usize>,
    sim: Vec<f64>,
}

fn dense_ids(set: &TrajectorySet) -> HashMap<u64, usize> {
    let mut map = HashMap::new();
    for id in set.track_ids() {
        let next = map.len();
        map.insert(id, next);
    }
    map
}

/// Matches each frame at each threshold, pairs below the threshold being inadmissible, so as to
/// maximize total similarity; then scores detection and association per threshold.
pub fn evaluate_hota(gt: &TrajectorySet, pred: &TrajectorySet) -> Result<HotaReport, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::FrameCountMismatch { gt: gt.len(), pred: pred.len() });
    }
    let (gt_ids, pred_ids) = (dense_ids(gt), dense_ids(pred));
    let mut gt_count = vec![0u64; gt_ids.len()];
    let mut pred_count = vec![0u64; pred_ids.len()];
    for r in gt.frames.iter().flatten() {
        gt_count[gt_ids[&r.track_id]] += 1;
    }
    for r in pred.frames.iter().flatten() {
        pred_count[pred_ids[&r.track_id]] += 1;
    }
    let frames: Vec<Frame> = gt
        .frames
        .par_iter()
        .zip(pred.frames.par_iter())
        .map(|(g, p)| Frame {
            gt: g.iter().map(|r| gt_ids[&r.track_id]).collect(),
            pred: p.iter().map(|r| pred_ids[&r.track_id]).collect(),
            sim: g.iter().flat_map(|a| p.iter().map(|b| iou3d(&a.state, &b.state))).collect(),
        })
        .collect();
    let total_gt: u64 = gt_count.iter().sum();
    let total_pred: u64 = pred_count.iter().sum();

    let per_alpha: Vec<AlphaRow> = alphas()
        .into_par_iter()
        .map(|alpha| {
            let mut tp = 0u64;
            let mut loc_sum = 0.0;
            let mut pair_count: BTreeMap<(usize, usize), u64> = BTreeMap::new();
            for f in &frames {
                let (rows, cols) = (f.gt.len(), f.pred.len());
                let admissible: Vec<bool> = f.sim.iter().map(|&s| s >= alpha - f64::EPSILON).collect();
                let costs: Vec<f64> = f.sim.iter().zip(&admissible).map(|(&s, &a)| if a { -s } else { 0.0 }).collect();
                for (r, c) in assignment::solve(&costs, rows, cols).into_iter().enumerate() {
                    let Some(c) = c else { continue };
                    if !admissible[r * cols + c] {
                        continue;
                    }
                    tp += 1;
                    loc_sum += f.sim[r * cols + c];
                    *pair_count.entry((f.gt[r], f.pred[c])).or_default() += 1;
                }
            }
            let (fn_, fp) = (total_gt - tp, total_pred - tp);
            let det_a = tp as f64 / ((tp + fn_ + fp).max(1)) as f64;
            // every TP of pair (g, p) contributes TPA / (TPA + FNA + FPA) for that pair
            let ass_sum: f64 = pair_count
                .iter()
                .map(|(&(g, p), &tpa)| {
                    let (fna, fpa) = (gt_count[g] - tpa, pred_count[p] - tpa);
                    tpa as f64 * tpa as f64 / (tpa + fna + fpa) as f64
                })
                .sum();
            let ass_a = ass_sum / (tp.max(1)) as f64;
            let loc_a = if tp == 0 { 1.0 } else { loc_sum / tp as f64 };
            AlphaRow { alpha, hota: (det_a * ass_a).sqrt(), det_a, ass_a, loc_a, tp, fn_, fp }
        })
        .collect();

    let mean = |f: fn(&AlphaRow) -> f64| per_alpha.iter().map(f).sum::<f64>() / per_alpha.len() as f64;
    Ok(HotaReport {
        hota: mean(|r| r.hota),
        det_a: mean(|r| r.det_a),
        ass_a: mean(|r| r.ass_a),
        loc_a: mean(|r| r.loc_a),
        per_alpha,
    })
}
