//! `riscell`: simulate, calibrate and bias the two-slope RIS unit cell.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riscell::biasctl::DomainKind;
use riscell::calibration::CircuitParam;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] riscell::Error),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use riscell::Error as E;
        match self {
            CliError::Core(E::UnreachablePhase { .. }) => 2,
            CliError::Core(
                E::Parse { .. }
                | E::UnsupportedPortCount { .. }
                | E::UnsupportedParameter(_)
                | E::Schema(_)
                | E::Json(_),
            ) => 3,
            CliError::NotConverged(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "riscell", version, about = "Two-slope varactor RIS unit-cell toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the reflection coefficient over frequency at one bias point.
    Sim(SimArgs),
    /// Fit circuit parameters to scalar operating-point targets.
    Calibrate(CalibrateArgs),
    /// Find the bias realizing one reflection phase.
    Solve(SolveArgs),
    /// Tabulate biases over a phase grid.
    Lut(LutArgs),
    /// Configure an array for a steered beam and evaluate its pattern.
    Beam(BeamArgs),
    /// Fit circuit parameters to one-port Touchstone data.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Model file; the shipped calibrated model when omitted.
    #[arg(long)]
    pub model: Option<std::path::PathBuf>,
    /// Dog-bone varactor capacitance (F).
    #[arg(long, conflicts_with = "v1", required_unless_present = "v1")]
    pub cd1: Option<f64>,
    /// Patch varactor capacitance (F).
    #[arg(long, conflicts_with = "v2", required_unless_present = "v2")]
    pub cd2: Option<f64>,
    /// Dog-bone varactor reverse bias (V).
    #[arg(long, allow_negative_numbers = true)]
    pub v1: Option<f64>,
    /// Patch varactor reverse bias (V).
    #[arg(long, allow_negative_numbers = true)]
    pub v2: Option<f64>,
    /// Sweep start (Hz); defaults to the model band.
    #[arg(long)]
    pub fstart: Option<f64>,
    #[arg(long)]
    pub fstop: Option<f64>,
    #[arg(long, default_value_t = riscell::circuit::DEFAULT_SWEEP_POINTS)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Target list (JSON) or `default` for the built-in operating points.
    #[arg(long, default_value = "default")]
    pub targets: String,
    /// Seed model file; the shipped seed when omitted.
    #[arg(long)]
    pub seed: Option<std::path::PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Parameters held at their seed values, comma separated (r1,l1,c1,r2,l2,c2,l0,rs1,rs2).
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<CircuitParam>,
    #[arg(long)]
    pub out: std::path::PathBuf,
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: Option<std::path::PathBuf>,
    #[arg(long)]
    pub domain: DomainKind,
    /// Target reflection phase (degrees).
    #[arg(long, allow_negative_numbers = true)]
    pub phase: f64,
}

#[derive(Debug, Args)]
pub struct LutArgs {
    #[arg(long)]
    pub model: Option<std::path::PathBuf>,
    #[arg(long)]
    pub domain: DomainKind,
    #[arg(long, allow_negative_numbers = true, default_value_t = -160.0)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 160.0)]
    pub to: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Output format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BeamArgs {
    #[arg(long)]
    pub model: Option<std::path::PathBuf>,
    /// Lookup table in JSON form, as written by `lut`.
    #[arg(long)]
    pub lut: std::path::PathBuf,
    #[arg(long, default_value_t = 16)]
    pub nx: usize,
    #[arg(long, default_value_t = 16)]
    pub ny: usize,
    #[arg(long, default_value_t = riscell::array::DEFAULT_PITCH)]
    pub pitch: f64,
    /// Direction of arrival as `theta,phi` in degrees.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub incident: String,
    /// Steered direction as `theta,phi` in degrees.
    #[arg(long, default_value = "30,0", allow_hyphen_values = true)]
    pub desired: String,
    /// Lowest evaluation frequency (Hz); defaults to f0 - 100 MHz.
    #[arg(long)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub fpoints: usize,
    #[arg(long, default_value_t = riscell::array::DEFAULT_SCAN_STEP_DEG)]
    pub scan_step: f64,
    /// Pattern CSV path.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Array configuration JSON path; `<out stem>.config.json` when omitted.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One-port Touchstone files.
    #[arg(long, num_args = 1.., required = true)]
    pub s1p: Vec<std::path::PathBuf>,
    /// Bias per file as `v1,v2` (volts, or farads with --capacitance).
    #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
    pub bias: Vec<String>,
    /// Read `--bias` pairs as varactor capacitances.
    #[arg(long)]
    pub capacitance: bool,
    #[arg(long)]
    pub seed: Option<std::path::PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<CircuitParam>,
    #[arg(long)]
    pub out: std::path::PathBuf,
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sim(a) => commands::sim(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Solve(a) => commands::solve(a),
        Command::Lut(a) => commands::lut(a),
        Command::Beam(a) => commands::beam(a),
        Command::Fit(a) => commands::fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
