//! The `outsidein` command-line tool.
//!
//! Every subcommand reads JSON or newline-delimited JSON inputs, writes its data files and a
//! [`RunManifest`](io::RunManifest) recording the resolved configuration, input checksums,
//! output checksums and stage timings. Exit codes: 0 success, 1 invalid input, 2 internal error.

pub mod commands;
pub mod error;
pub mod io;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "outsidein", version, about = "Outside-in multi-camera tracking toolkit", arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replaces the seed of the scene, workload or check suite.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
    /// Directory for outputs; relative `--out` paths are placed inside it.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: ground truth, detections, retrieval split and pyramids.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Do not write pyramids.bin.
        #[arg(long)]
        skip_pyramids: bool,
    },
    /// Run the tracker over a detections file.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted tracks against ground truth with HOTA.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieval metrics for probe embeddings against a gallery.
    ReidEval {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the reference and packed aggregation paths.
    BenchMsda {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic loss gradients with finite differences.
    LossesCheck(LossesArgs),
    /// Simulate, track and evaluate from one configuration.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the pipeline with and without appearance in association.
    Ablation {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Half,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.workers {
        Some(0) => Err(CliError::Validation("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(error::internal)?;
            pool.install(|| commands::execute(&cli))
        }
        None => commands::execute(&cli),
    }
}
