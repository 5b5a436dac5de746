//! `gradecore` command-line entry point.
//!
//! Exit codes: 0 on success, 1 when a command fails at runtime, 2 for
//! usage errors (bad or missing flags, unreadable config files).

mod commands;
mod events;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradecore::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "gradecore", version, about = "Train, evaluate and inspect road-surface grade classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker thread cap; 1 gives the bit-reproducible mode.
    #[arg(long, global = true, env = "GRADECORE_THREADS")]
    threads: Option<usize>,

    /// Write JSON-lines events and logs to stderr.
    #[arg(long, global = true)]
    log_json: bool,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train a model on a class-per-directory image tree.
    Train(TrainArgs),
    /// Score a checkpoint against an image tree.
    Evaluate(EvaluateArgs),
    /// Class probabilities for one image.
    Predict(PredictArgs),
    /// Finite-difference check of the backward passes.
    Gradcheck(GradcheckArgs),
    /// Render a history CSV as a loss-curve SVG.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// mlp, cnn, logreg or knn; may come from the config file instead.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Dataset root with one sub-directory per class.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Early-stopping patience, or `none`.
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// `key=value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoint, history, plot and manifest.
    #[arg(long, default_value = "gradecore-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    /// Decoded-dataset cache file, reused when its size matches.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds per network.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = gradecore::gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// History CSV written by `train`.
    #[arg(long)]
    pub history: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

/// How a command failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<gradecore::Error> for Failure {
    fn from(e: gradecore::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    events::init(cli.log_json);

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            events::emit("error", serde_json::json!({ "message": msg }));
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
