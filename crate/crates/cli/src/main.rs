//! `limnet` command-line driver.
//!
//! Exit codes: 0 success, 1 check failure (gradcheck, non-finite training),
//! 2 usage or input error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use limnet::heads::Task;
use limnet::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "limnet",
    version,
    about = "Attention encoder over frozen token embeddings",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the planted synthetic corpus as split embedding files.
    Synth(SynthArgs),
    /// Train a model and write its run log.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled split.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON config file (`synth` and `split` sections are used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_docs: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Train, validation and test fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding `train.limd`, `val.limd` and `test.limd`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label file; defaults to `labels.jsonl` in the data directory.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub scorer_hidden: Option<usize>,
    /// Hidden widths of a deeper head, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub head_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub grad_accumulation: Option<usize>,
    /// Run this many consecutive seeds and report mean and std.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Run log path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the best-validation parameters here.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A `.limd` file, or a data directory combined with `--split`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Saved model file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Multiplies the analytic gradient; for testing the checker.
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub grad_scale: f64,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Check(String),
    Lib(limnet::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Lib(limnet::Error::NanLoss { .. } | limnet::Error::NonFinite(_)) => 1,
            CliError::Input(_) | CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Check(m) => f.write_str(m),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

impl From<limnet::Error> for CliError {
    fn from(e: limnet::Error) -> Self {
        CliError::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
