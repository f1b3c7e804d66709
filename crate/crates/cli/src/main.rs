//! `plcf`: simulate, analyze, and calibrate the min-max piecewise-linear
//! car-following model.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 I/O errors, 4 domain
//! errors (law inversion, empty calibration problems, ...).

mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plcf_core::dynamics::DiscountMode;

#[derive(Parser)]
#[command(
    name = "plcf",
    version,
    about = "Piecewise-linear car-following toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and export the trajectory.
    Simulate(SimulateArgs),
    /// Compute a stationary regime and verify it against the dynamics.
    Stationary(StationaryArgs),
    /// Identify (m, lambda) and the behavior law from trajectory data.
    Calibrate(CalibrateArgs),
    /// Report one-step-ahead prediction RMSE of a law on a dataset.
    Validate(ValidateArgs),
    /// Generate synthetic measurement data from a simulation.
    Gen(GenArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration (TOML: scenario, anticipation, horizon).
    #[arg(long)]
    config: std::path::PathBuf,
    /// Behavior law CSV (`group,alpha,beta`).
    #[arg(long)]
    law: std::path::PathBuf,
    /// Trajectory CSV to write (`car,t,x,v`).
    #[arg(long)]
    out: std::path::PathBuf,
    /// Print per-car and fleet motion statistics.
    #[arg(long)]
    stats: bool,
    /// Re-run with these anticipation depths and compare smoothing;
    /// trajectories go to `<out>_m<M>.csv`.
    #[arg(long, value_delimiter = ',')]
    m_sweep: Vec<usize>,
}

#[derive(Args)]
struct StationaryArgs {
    #[arg(long)]
    law: std::path::PathBuf,
    /// Ring circumference in meters (ring regime).
    #[arg(long, conflicts_with = "v1")]
    ring_length: Option<f64>,
    /// Asymptotic leader speed in meters per step (open regime).
    #[arg(long)]
    v1: Option<f64>,
    #[arg(long)]
    cars: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::OnVelocity)]
    mode: ModeArg,
    /// Write the stationary positions as `car,x`.
    #[arg(long)]
    positions_out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Trajectory dataset to calibrate on.
    #[arg(long)]
    data: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Internal)]
    format: FormatArg,
    /// Depth cap before leader-redundancy pruning.
    #[arg(long, default_value_t = 5)]
    m_max: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda_min: f64,
    #[arg(long, default_value_t = 5.0)]
    lambda_max: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_step: f64,
    /// Segmentation penalty; default is scale-aware
    /// (0.5 * Var(v) * samples per bin).
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    /// Max midpoint gap allowed when rebuilding the min-max law.
    #[arg(long, default_value_t = 0.1)]
    fit_tolerance: f64,
    /// Calibrate a single follower instead of the fleet.
    #[arg(long)]
    car: Option<u64>,
    /// Fitted law CSV to write.
    #[arg(long)]
    law_out: Option<std::path::PathBuf>,
    /// Error surface CSV to write (`m,lambda,total_error,segments`).
    #[arg(long)]
    surface_out: Option<std::path::PathBuf>,
    /// Scatter CSV of the best grid point (`y_tilde,v,car,t`).
    #[arg(long)]
    scatter_out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Internal)]
    format: FormatArg,
    #[arg(long)]
    law: std::path::PathBuf,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::OnSpacing)]
    mode: ModeArg,
}

#[derive(Args)]
struct GenArgs {
    /// Run configuration (TOML) of the generating simulation.
    #[arg(long)]
    config: std::path::PathBuf,
    #[arg(long)]
    law: std::path::PathBuf,
    /// Dataset CSV to write (internal format).
    #[arg(long)]
    out: std::path::PathBuf,
    /// Position jitter standard deviation in meters.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// RNG seed for the jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    OnVelocity,
    OnSpacing,
}

impl From<ModeArg> for DiscountMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::OnVelocity => DiscountMode::OnVelocity,
            ModeArg::OnSpacing => DiscountMode::OnSpacing,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Internal,
    Ngsim,
}

impl From<FormatArg> for plcf_core::io::Format {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Internal => plcf_core::io::Format::Internal,
            FormatArg::Ngsim => plcf_core::io::Format::Ngsim,
        }
    }
}

/// Error category deciding the process exit code.
pub enum CliError {
    Config(String),
    Io(String),
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Domain(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Domain(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Stationary(args) => commands::stationary(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Validate(args) => commands::validate(args),
        Command::Gen(args) => commands::gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("plcf: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
