//! `stawnet` command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 invalid input or configuration,
//! 3 numerical abort during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY: &str = "history.csv";
pub const REPORT: &str = "report.json";
pub const IMPUTED: &str = "imputed.csv";
pub const PROVENANCE: &str = "provenance.csv";
pub const RUN_CONFIG: &str = "run_config.json";
pub const SYNTH_DATA: &str = "synthetic.csv";
pub const SYNTH_META: &str = "synthetic.json";

#[derive(Parser, Debug)]
#[command(name = "stawnet", version, about = "Spatiotemporal imputation of sensor matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a ring-diffusion dataset with known ground truth.
    Synth(SynthArgs),
    /// Hide entries, train a network and write a checkpoint.
    Train(TrainArgs),
    /// Score the model and baselines on artificially hidden test entries.
    Evaluate(EvaluateArgs),
    /// Fill every missing entry of a dataset.
    Impute(ImputeArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// CSV with a `timestamp` column followed by one column per sensor.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fraction of observed entries hidden for training and evaluation.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Seeds the mask, the initialization and the batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6])]
    pub rates: Vec<f64>,
    /// Baselines to include, comma separated; `none` for the model alone.
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = ["linear_interpolation".to_string(), "historical_mean".to_string(), "last_observation".to_string()]
    )]
    pub baselines: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adds an imputer that reads back the hidden truth.
    #[arg(long, hide = true)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Additionally hide this fraction of observed entries before imputing.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Run configuration whose architecture replaces the small default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub nodes: usize,
    /// Scales the tanh derivative to simulate a broken backward rule.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

/// A verification ran to completion and failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<stawnet::Error>() {
        Some(stawnet::Error::NumericalAbort { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Impute(a) => commands::impute(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
