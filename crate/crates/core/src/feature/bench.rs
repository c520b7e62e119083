//! Throughput harness comparing the reference and packed aggregation paths.

use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{msda_reference, FeatureError, FeatureLevel, FeaturePyramid, PackedMsda, PrecisionMode, SamplePlan, SampleTuple};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelShape {
    pub height: usize,
    pub width: usize,
    pub stride: f64,
}

/// Benchmark workload descriptor (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchWorkload {
    pub schema_version: u32,
    pub cameras: usize,
    pub levels: Vec<LevelShape>,
    pub channels: usize,
    pub queries: usize,
    pub points_per_query: usize,
    pub repetitions: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub target_fps: f64,
}

fn default_warmup() -> usize {
    1
}

fn default_fps() -> f64 {
    30.0
}

impl Default for BenchWorkload {
    /// Six cameras, four levels of a 704x256 image, 256 channels, 900 queries of 13 points.
    fn default() -> Self {
        Self {
            schema_version: 1,
            cameras: 6,
            levels: vec![
                LevelShape { height: 32, width: 88, stride: 8.0 },
                LevelShape { height: 16, width: 44, stride: 16.0 },
                LevelShape { height: 8, width: 22, stride: 32.0 },
                LevelShape { height: 4, width: 11, stride: 64.0 },
            ],
            channels: 256,
            queries: 900,
            points_per_query: 13,
            repetitions: 10,
            warmup: 1,
            seed: 7,
            target_fps: 30.0,
        }
    }
}

impl BenchWorkload {
    /// Seeded pyramids with features in `[-1, 1]` and a plan with weights in `(0.05, 1]`.
    pub fn generate(&self) -> Result<(Vec<FeaturePyramid>, SamplePlan), FeatureError> {
        let mut pyramids = Vec::with_capacity(self.cameras);
        for cam in 0..self.cameras {
            let mut rng = substream(self.seed, "bench-features", cam as u64);
            let levels = self
                .levels
                .iter()
                .map(|s| {
                    let n = s.height * s.width * self.channels;
                    let values = (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
                    FeatureLevel::new(s.height, s.width, self.channels, s.stride, values)
                })
                .collect::<Result<Vec<_>, _>>()?;
            pyramids.push(FeaturePyramid::new(cam as u32, levels)?);
        }
        let mut rng = substream(self.seed, "bench-plan", 0);
        let queries = (0..self.queries)
            .map(|_| {
                (0..self.points_per_query)
                    .map(|_| {
                        let level = rng.random_range(0..self.levels.len());
                        let shape = self.levels[level];
                        SampleTuple {
                            camera_id: rng.random_range(0..self.cameras) as u32,
                            level,
                            u: rng.random_range(-0.5..shape.width as f32 - 0.5),
                            v: rng.random_range(-0.5..shape.height as f32 - 0.5),
                            weight: rng.random_range(0.05f32..=1.0),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok((pyramids, SamplePlan::new(queries)))
    }
}

/// SHA-256 over the little-endian bytes of every feature value and plan tuple.
pub fn input_checksum(pyramids: &[FeaturePyramid], plan: &SamplePlan) -> String {
    let mut h = Sha256::new();
    for p in pyramids {
        h.update(p.camera_id().to_le_bytes());
        for level in p.levels() {
            for v in level.values() {
                h.update(v.to_le_bytes());
            }
        }
    }
    for q in &plan.queries {
        h.update((q.len() as u64).to_le_bytes());
        for t in q {
            h.update(t.camera_id.to_le_bytes());
            h.update((t.level as u64).to_le_bytes());
            h.update(t.u.to_le_bytes());
            h.update(t.v.to_le_bytes());
            h.update(t.weight.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathTiming {
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl PathTiming {
    fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let secs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
        Some(Self {
            mean_s: secs.iter().sum::<f64>() / secs.len() as f64,
            min_s: secs.iter().copied().fold(f64::INFINITY, f64::min),
            max_s: secs.iter().copied().fold(0.0, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub host: String,
    pub timer_resolution_ns: u64,
    pub precision: PrecisionMode,
    pub workers: usize,
    pub workload: BenchWorkload,
    pub input_checksum: Option<String>,
    pub reference: Option<PathTiming>,
    pub optimized: Option<PathTiming>,
    /// Mean reference time over mean optimized time.
    pub speedup: Option<f64>,
    pub cameras_supported_reference: Option<u64>,
    pub cameras_supported_optimized: Option<u64>,
    pub max_abs_deviation: Option<f32>,
}

pub fn host_description() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!("{}-{}, {cpus} logical cpus, {model}", std::env::consts::OS, std::env::consts::ARCH)
}

/// Smallest non-zero step observed between consecutive clock reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Cameras sustainable at `fps` given the per-camera processing time: `floor(1 / (fps * t))`.
pub fn cameras_supported(fps: f64, per_camera_s: f64) -> u64 {
    if per_camera_s <= 0.0 {
        return u64::MAX;
    }
    (1.0 / (fps * per_camera_s)).floor() as u64
}

/// Runs the workload on the current rayon pool, interleaving reference and optimized runs.
pub fn run_bench(workload: &BenchWorkload, precision: PrecisionMode) -> Result<BenchReport, FeatureError> {
    let mut report = BenchReport {
        schema_version: 1,
        host: host_description(),
        timer_resolution_ns: timer_resolution().as_nanos() as u64,
        precision,
        workers: rayon::current_num_threads(),
        workload: workload.clone(),
        input_checksum: None,
        reference: None,
        optimized: None,
        speedup: None,
        cameras_supported_reference: None,
        cameras_supported_optimized: None,
        max_abs_deviation: None,
    };
    if workload.repetitions == 0 {
        return Ok(report);
    }
    let (pyramids, plan) = workload.generate()?;
    report.input_checksum = Some(input_checksum(&pyramids, &plan));
    let packed = PackedMsda::new(&pyramids, precision)?;

    let mut reference_out = None;
    let mut optimized_out = None;
    for _ in 0..workload.warmup {
        reference_out = Some(msda_reference(&pyramids, &plan)?);
        optimized_out = Some(packed.run(&plan)?);
    }
    let mut ref_times = Vec::with_capacity(workload.repetitions);
    let mut opt_times = Vec::with_capacity(workload.repetitions);
    for _ in 0..workload.repetitions {
        let t = Instant::now();
        let r = msda_reference(&pyramids, &plan)?;
        ref_times.push(t.elapsed());
        reference_out = Some(r);
        let t = Instant::now();
        let o = packed.run(&plan)?;
        opt_times.push(t.elapsed());
        optimized_out = Some(o);
    }
    let (r, o) = (reference_out.expect("ran"), optimized_out.expect("ran"));
    report.max_abs_deviation = Some(r.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max));
    report.reference = PathTiming::from_samples(&ref_times);
    report.optimized = PathTiming::from_samples(&opt_times);
    if let (Some(rt), Some(ot)) = (report.reference, report.optimized) {
        report.speedup = Some(rt.mean_s / ot.mean_s);
        let cams = workload.cameras.max(1) as f64;
        report.cameras_supported_reference = Some(cameras_supported(workload.target_fps, rt.mean_s / cams));
        report.cameras_supported_optimized = Some(cameras_supported(workload.target_fps, ot.mean_s / cams));
    }
    Ok(report)
}
