use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Embedding, OaeError};

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;
const MAX_RANK: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub match_mean: Option<f64>,
    pub mismatch_mean: Option<f64>,
    pub match_count: u64,
    pub mismatch_count: u64,
}

/// Probe-to-gallery distance counts in bins of width 0.05 over `[0, 2]`; larger distances land
/// in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub bin_width: f64,
    pub matches: Vec<u64>,
    pub mismatches: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidReport {
    pub probes: usize,
    pub gallery: usize,
    /// Fraction of probes whose first same-identity hit is within rank `k + 1`.
    pub cmc: Vec<f64>,
    pub rank1: f64,
    #[serde(rename = "map")]
    pub mean_ap: f64,
    pub distances: DistanceStats,
    pub histograms: Histograms,
}

fn bin(d: f64) -> usize {
    ((d / HISTOGRAM_BIN_WIDTH).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Ranks the gallery for every probe by L2 distance (ties broken by gallery order).
pub fn reid_evaluate(gallery: &[(Embedding, u64)], probes: &[(Embedding, u64)]) -> Result<ReidReport, OaeError> {
    let ids: BTreeSet<u64> = gallery.iter().map(|g| g.1).collect();
    if ids.len() < 2 {
        return Err(OaeError::DegenerateGallery(ids.len()));
    }
    if let Some(p) = probes.iter().find(|p| !ids.contains(&p.1)) {
        return Err(OaeError::MissingIdentity(p.1));
    }
    let dim = gallery[0].0.dim();
    if let Some(e) = gallery.iter().chain(probes).find(|e| e.0.dim() != dim) {
        return Err(OaeError::DimensionMismatch { expected: dim, found: e.0.dim() });
    }

    let k_max = MAX_RANK.min(gallery.len());
    let mut hits = vec![0u64; k_max];
    let mut ap_sum = 0.0;
    let mut hist =
        Histograms { bin_width: HISTOGRAM_BIN_WIDTH, matches: vec![0; HISTOGRAM_BINS], mismatches: vec![0; HISTOGRAM_BINS] };
    let (mut sum, mut match_sum, mut mismatch_sum) = (0.0, 0.0, 0.0);
    let (mut match_count, mut mismatch_count) = (0u64, 0u64);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);

    for (probe, pid) in probes {
        let dist: Vec<f64> = gallery.iter().map(|(g, _)| probe.distance(g)).collect();
        for (d, (_, gid)) in dist.iter().zip(gallery) {
            sum += d;
            min = min.min(*d);
            max = max.max(*d);
            if gid == pid {
                match_sum += d;
                match_count += 1;
                hist.matches[bin(*d)] += 1;
            } else {
                mismatch_sum += d;
                mismatch_count += 1;
                hist.mismatches[bin(*d)] += 1;
            }
        }
        let mut order: Vec<usize> = (0..gallery.len()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let mut found = 0usize;
        let mut precision_sum = 0.0;
        for (rank, &g) in order.iter().enumerate() {
            if gallery[g].1 == *pid {
                if found == 0 && rank < k_max {
                    hits[rank] += 1;
                }
                found += 1;
                precision_sum += found as f64 / (rank + 1) as f64;
            }
        }
        ap_sum += precision_sum / found as f64;
    }

    let n = probes.len().max(1) as f64;
    let mut cmc = Vec::with_capacity(k_max);
    let mut running = 0u64;
    for h in hits {
        running += h;
        cmc.push(running as f64 / n);
    }
    let pairs = (match_count + mismatch_count).max(1) as f64;
    Ok(ReidReport {
        probes: probes.len(),
        gallery: gallery.len(),
        rank1: cmc.first().copied().unwrap_or(0.0),
        cmc,
        mean_ap: ap_sum / n,
        distances: DistanceStats {
            min: if probes.is_empty() { 0.0 } else { min },
            max: if probes.is_empty() { 0.0 } else { max },
            mean: sum / pairs,
            match_mean: (match_count > 0).then(|| match_sum / match_count as f64),
            mismatch_mean: (mismatch_count > 0).then(|| mismatch_sum / mismatch_count as f64),
            match_count,
            mismatch_count,
        },
        histograms: hist,
    })
}
