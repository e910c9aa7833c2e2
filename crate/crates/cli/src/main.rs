//! `sofsat` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sofsat_core::synthesis::{DEFAULT_GAMMA, DEFAULT_I_MAX};
use sofsat_core::verifier::DEFAULT_SEED;

/// Saturated static output feedback synthesis for DAR models.
#[derive(Debug, Parser)]
#[command(name = "sofsat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Well-posedness and oracle residual checks of a model file.
    Check(CheckArgs),
    /// Feasibility search followed by region-of-attraction maximization.
    Synth(SynthArgs),
    /// Independent verification of a synthesis report.
    Verify(VerifyArgs),
    /// Closed-loop time series from one initial state.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    /// Random samples for the oracle residual check.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Grid points per axis for the well-posedness scan.
    #[arg(long, default_value_t = sofsat_core::model::DEFAULT_GRID_PER_AXIS)]
    grid: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_I_MAX)]
    imax: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Stop after the feasibility stage.
    #[arg(long)]
    skip_maximize: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Boundary and interior sample count.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    trajectories: usize,
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long, default_value_t = 50.0)]
    tfinal: f64,
    /// Uncertainty signal for the trajectories; all of `cycle`, `random`
    /// and `sine` in turn when absent.
    #[arg(long)]
    delta_mode: Option<String>,
    /// Verification document path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 20.0)]
    tfinal: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Keep every k-th integration step.
    #[arg(long, default_value_t = 10)]
    every: usize,
    #[arg(long, default_value = "zero")]
    delta_mode: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Time-series CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Boundary polyline of the ellipsoid (n = 2 only); defaults to
    /// `<out>.ellipse.csv` next to the time series.
    #[arg(long)]
    ellipse: Option<PathBuf>,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    /// A check or verification ran and did not pass.
    Rejected(String),
    /// Unreadable, malformed or inconsistent input.
    Input(String),
    IterationLimit(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Rejected(_) => 1,
            Self::Input(_) => 2,
            Self::IterationLimit(_) => 3,
            Self::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Rejected(m) | Self::Input(m) | Self::IterationLimit(m) | Self::Solver(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => commands::check(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
