use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use outsidein_core::feature::{run_bench, BenchWorkload, PrecisionMode};
use outsidein_core::metrics::evaluate_hota;
use outsidein_core::oae::reid_evaluate;
use outsidein_core::objectives::gradcheck::{run_suite, GradCheck};
use outsidein_core::simulator::{LabeledEmbedding, SceneConfig};
use outsidein_core::tracker::{run_sequence, DetectionFrame, TrackerParams};
use outsidein_core::TrajectorySet;

use crate::error::{validation, CliError, CliResult};
use crate::io::{to_json_bytes, to_ndjson_bytes, HashingWriter, Input, RunManifest};
use crate::pipeline::{self, EmbeddingSource, OaeSettings, PipelineConfig, PIPELINE_SCHEMA_VERSION};
use crate::{Cli, Command, LossesArgs, Mode};

/// Output directory used by directory-producing commands when `--out-dir` is absent.
pub const DEFAULT_OUT_DIR: &str = "out";

/// Parameters file of `track`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackParamsFile {
    pub schema_version: u32,
    #[serde(default)]
    pub tracker: TrackerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossesReport {
    pub seed: u64,
    pub instances: usize,
    pub passed: bool,
    pub checks: Vec<GradCheck>,
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { config, skip_pyramids } => simulate(cli, config, *skip_pyramids),
        Command::Track { detections, params, out } => track(cli, detections, params.as_deref(), out.as_deref()),
        Command::Eval { gt, pred, out } => eval(cli, gt, pred, out.as_deref()),
        Command::ReidEval { gallery, probes, out } => reid(cli, gallery, probes, out.as_deref()),
        Command::BenchMsda { config, mode, out } => bench(cli, config.as_deref(), *mode, out.as_deref()),
        Command::LossesCheck(args) => losses(cli, args),
        Command::Pipeline { config } => run_pipeline(cli, config),
        Command::Ablation { config } => run_ablation(cli, config),
    }
}

/// Where a single-file command writes: `--out` (inside `--out-dir` when relative), else
/// `default_name` inside `--out-dir`, else standard output. The manifest goes next to the file
/// as `<name>.manifest.json`, or to standard error.
struct FileTarget {
    data: Option<PathBuf>,
    manifest: Option<PathBuf>,
}

impl FileTarget {
    fn new(cli: &Cli, out: Option<&Path>, default_name: &str) -> Self {
        let data = match (out, &cli.out_dir) {
            (Some(p), Some(d)) if p.is_relative() => d.join(p),
            (Some(p), _) => p.to_path_buf(),
            (None, Some(d)) => d.join(default_name),
            (None, None) => return Self { data: None, manifest: None },
        };
        let mut name = data.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        Self { manifest: Some(data.with_file_name(name)), data: Some(data) }
    }

    fn emit(&self, m: &mut RunManifest, bytes: &[u8]) -> CliResult<()> {
        match &self.data {
            Some(p) => m.write(bytes, p),
            None => {
                print!("{}", String::from_utf8_lossy(bytes));
                Ok(())
            }
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Reads a pipeline configuration, or a bare scene which is wrapped with default settings and
/// synthetic embeddings.
fn load_pipeline_config(cli: &Cli, input: &Input) -> CliResult<PipelineConfig> {
    let value = input.json_value()?;
    let mut cfg = if value.get("scene").is_some() {
        input.json::<PipelineConfig>()?
    } else {
        PipelineConfig {
            schema_version: PIPELINE_SCHEMA_VERSION,
            scene: input.json::<SceneConfig>()?,
            tracker: TrackerParams::default(),
            embedding_source: EmbeddingSource::Synthetic,
            oae: OaeSettings::default(),
            write_pyramids: false,
        }
    };
    if let Some(seed) = cli.seed_override {
        cfg.scene.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cli: &Cli, config: &Path, skip_pyramids: bool) -> CliResult<()> {
    let mut m = RunManifest::new("simulate");
    let input = Input::read(config)?;
    m.inputs.push(input.digest());
    let cfg = load_pipeline_config(cli, &input)?;
    m.set_config(&cfg)?;
    let dir = out_dir(cli);
    let seq = if skip_pyramids {
        m.time("simulate", || pipeline::simulate(&cfg, None))?
    } else {
        let mut sink = HashingWriter::create(&dir.join("pyramids.bin"))?;
        let seq = m.time("simulate", || pipeline::simulate(&cfg, Some(&mut sink)))?;
        m.outputs.push(sink.finish()?);
        seq
    };
    let (gallery, probes) = seq.reid_split();
    m.write(&to_ndjson_bytes(&seq.truths)?, &dir.join("truth.ndjson"))?;
    m.write(seq.ground_truth().to_ndjson().as_bytes(), &dir.join("gt_tracks.ndjson"))?;
    m.write(&to_ndjson_bytes(&seq.detections)?, &dir.join("detections.ndjson"))?;
    m.write(&to_ndjson_bytes(&gallery)?, &dir.join("gallery.ndjson"))?;
    m.write(&to_ndjson_bytes(&probes)?, &dir.join("probes.ndjson"))?;
    eprintln!("simulated {} frames into {}", seq.truths.len(), dir.display());
    m.finish(Some(&dir.join("manifest.json")))
}

fn track(cli: &Cli, detections: &Path, params: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::new("track");
    let det_input = Input::read(detections)?;
    m.inputs.push(det_input.digest());
    let frames: Vec<DetectionFrame> = det_input.ndjson()?;
    let params = match params {
        Some(p) => {
            let input = Input::read(p)?;
            m.inputs.push(input.digest());
            let file: TrackParamsFile = input.json()?;
            if file.schema_version != 1 {
                return Err(validation(format!("{}: schema_version {} is not supported", p.display(), file.schema_version)));
            }
            file.tracker
        }
        None => TrackerParams::default(),
    };
    m.set_config(&TrackParamsFile { schema_version: 1, tracker: params })?;
    let tracks = m.time("track", || run_sequence(&frames, &params)).map_err(validation)?;
    let target = FileTarget::new(cli, out, "tracks.ndjson");
    target.emit(&mut m, tracks.to_ndjson().as_bytes())?;
    m.finish(target.manifest.as_deref())
}

fn read_tracks(input: &Input) -> CliResult<TrajectorySet> {
    let text = std::str::from_utf8(&input.bytes).map_err(|e| validation(format!("{}: {e}", input.path.display())))?;
    TrajectorySet::from_ndjson(text).map_err(|e| validation(format!("{}: {e}", input.path.display())))
}

fn eval(cli: &Cli, gt: &Path, pred: &Path, out: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::new("eval");
    let (gt_in, pred_in) = (Input::read(gt)?, Input::read(pred)?);
    m.inputs.extend([gt_in.digest(), pred_in.digest()]);
    let (mut gt, mut pred) = (read_tracks(&gt_in)?, read_tracks(&pred_in)?);
    // trailing frames without records are not represented in the files
    let n = gt.len().max(pred.len());
    gt.pad_to(n);
    pred.pad_to(n);
    m.set_config(&serde_json::json!({ "frames": n }))?;
    let report = m.time("evaluate", || evaluate_hota(&gt, &pred)).map_err(validation)?;
    let target = FileTarget::new(cli, out, "hota.json");
    target.emit(&mut m, &to_json_bytes(&report)?)?;
    if let Some(p) = &target.data {
        m.write(report.to_csv().as_bytes(), &p.with_extension("csv"))?;
    }
    eprintln!("HOTA {:.4}  DetA {:.4}  AssA {:.4}  LocA {:.4}", report.hota, report.det_a, report.ass_a, report.loc_a);
    m.finish(target.manifest.as_deref())
}

fn reid(cli: &Cli, gallery: &Path, probes: &Path, out: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::new("reid-eval");
    let (g_in, p_in) = (Input::read(gallery)?, Input::read(probes)?);
    m.inputs.extend([g_in.digest(), p_in.digest()]);
    let pairs = |items: Vec<LabeledEmbedding>| items.into_iter().map(|e| (e.embedding, e.identity)).collect::<Vec<_>>();
    let g = pairs(g_in.ndjson()?);
    let p = pairs(p_in.ndjson()?);
    m.set_config(&serde_json::json!({ "gallery": g.len(), "probes": p.len() }))?;
    let report = m.time("evaluate", || reid_evaluate(&g, &p)).map_err(validation)?;
    let target = FileTarget::new(cli, out, "reid.json");
    target.emit(&mut m, &to_json_bytes(&report)?)?;
    eprintln!("rank-1 {:.4}  mAP {:.4}", report.rank1, report.mean_ap);
    m.finish(target.manifest.as_deref())
}

fn bench(cli: &Cli, config: Option<&Path>, mode: Mode, out: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::new("bench-msda");
    let mut workload = match config {
        Some(p) => {
            let input = Input::read(p)?;
            m.inputs.push(input.digest());
            input.json::<BenchWorkload>()?
        }
        None => BenchWorkload::default(),
    };
    if workload.schema_version != 1 {
        return Err(validation(format!("workload schema_version {} is not supported", workload.schema_version)));
    }
    if let Some(seed) = cli.seed_override {
        workload.seed = seed;
    }
    m.set_config(&workload)?;
    let precision = match mode {
        Mode::Full => PrecisionMode::Full,
        Mode::Half => PrecisionMode::PackedHalf,
    };
    let report = m.time("bench", || run_bench(&workload, precision)).map_err(validation)?;
    let target = FileTarget::new(cli, out, "bench.json");
    target.emit(&mut m, &to_json_bytes(&report)?)?;
    if let Some(s) = report.speedup {
        eprintln!("speedup {s:.3} on {}", report.host);
    }
    m.finish(target.manifest.as_deref())
}

fn losses(cli: &Cli, args: &LossesArgs) -> CliResult<()> {
    let mut m = RunManifest::new("losses-check");
    let seed = cli.seed_override.unwrap_or(args.seed);
    m.set_config(&serde_json::json!({ "seed": seed, "instances": args.instances }))?;
    let checks = m.time("check", || run_suite(seed, args.instances));
    let report = LossesReport { seed, instances: args.instances, passed: checks.iter().all(|c| c.passed), checks };
    let target = FileTarget::new(cli, args.out.as_deref(), "losses.json");
    target.emit(&mut m, &to_json_bytes(&report)?)?;
    m.finish(target.manifest.as_deref())?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.loss.as_str()).collect();
        Err(CliError::Validation(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn run_pipeline(cli: &Cli, config: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("pipeline");
    let input = Input::read(config)?;
    m.inputs.push(input.digest());
    let cfg = load_pipeline_config(cli, &input)?;
    m.set_config(&cfg)?;
    let dir = out_dir(cli);
    let seq = if cfg.write_pyramids {
        let mut sink = HashingWriter::create(&dir.join("pyramids.bin"))?;
        let seq = m.time("simulate", || pipeline::simulate(&cfg, Some(&mut sink)))?;
        m.outputs.push(sink.finish()?);
        seq
    } else {
        m.time("simulate", || pipeline::simulate(&cfg, None))?
    };
    let (tracks, report) = m.time("track_and_evaluate", || pipeline::track_and_evaluate(&seq, &cfg.tracker))?;
    m.write(&to_ndjson_bytes(&seq.truths)?, &dir.join("truth.ndjson"))?;
    m.write(seq.ground_truth().to_ndjson().as_bytes(), &dir.join("gt_tracks.ndjson"))?;
    m.write(&to_ndjson_bytes(&seq.detections)?, &dir.join("detections.ndjson"))?;
    m.write(tracks.to_ndjson().as_bytes(), &dir.join("tracks.ndjson"))?;
    m.write_json(&report, &dir.join("hota.json"))?;
    m.write(report.to_csv().as_bytes(), &dir.join("hota_alpha.csv"))?;
    eprintln!("HOTA {:.4}  DetA {:.4}  AssA {:.4}  LocA {:.4}", report.hota, report.det_a, report.ass_a, report.loc_a);
    m.finish(Some(&dir.join("manifest.json")))
}

fn run_ablation(cli: &Cli, config: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("ablation");
    let input = Input::read(config)?;
    m.inputs.push(input.digest());
    let cfg = load_pipeline_config(cli, &input)?;
    m.set_config(&cfg)?;
    let dir = out_dir(cli);
    let seq = m.time("simulate", || pipeline::simulate(&cfg, None))?;
    let run = m.time("track_and_evaluate", || pipeline::ablation(&seq, &cfg.tracker))?;
    m.write(run.tracks_on.to_ndjson().as_bytes(), &dir.join("tracks_oae.ndjson"))?;
    m.write(run.tracks_off.to_ndjson().as_bytes(), &dir.join("tracks_no_oae.ndjson"))?;
    m.write(run.report.on.to_csv().as_bytes(), &dir.join("hota_alpha_oae.csv"))?;
    m.write(run.report.off.to_csv().as_bytes(), &dir.join("hota_alpha_no_oae.csv"))?;
    m.write_json(&run.report, &dir.join("ablation.json"))?;
    let r = &run.report;
    eprintln!(
        "AssA {:.4} with appearance, {:.4} without (delta {:+.4}); HOTA {:.4} vs {:.4}",
        r.on.ass_a, r.off.ass_a, r.delta.ass_a, r.on.hota, r.off.hota
    );
    m.finish(Some(&dir.join("manifest.json")))
}
