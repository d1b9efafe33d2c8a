//! `fbcool`: batch front end. Every command writes its effective config, its
//! outputs and a `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 unstable loop,
//! 4 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::SpectrumSource;

#[derive(Debug, Parser)]
#[command(
    name = "fbcool",
    version,
    about = "Feedback laser cooling calculations and simulations"
)]
struct Cli {
    /// JSON config with one section per command. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "FBCOOL_OUT_DIR",
        default_value = "fbcool-out"
    )]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct LoopArgs {
    /// Reference loop a, b, c, d, or `custom` with --num and --den.
    #[arg(long = "loop")]
    tag: Option<String>,
    /// Numerator coefficients in ascending powers of s = iv/u, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    num: Option<Vec<f64>>,
    /// Denominator coefficients in ascending powers of s = iv/u.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    den: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalized force versus v/u for one loop.
    ForceCurve {
        #[command(flatten)]
        loop_args: LoopArgs,
        /// Largest v/u.
        #[arg(long)]
        vmax: Option<f64>,
        /// Grid intervals.
        #[arg(long)]
        points: Option<usize>,
        /// Resonator slope.
        #[arg(long, allow_negative_numbers = true)]
        r: Option<f64>,
        /// Plot unstable loops instead of failing.
        #[arg(long)]
        analysis_only: bool,
    },
    /// Closed-loop poles and stability verdict.
    LoopCheck {
        #[command(flatten)]
        loop_args: LoopArgs,
    },
    /// Closed-loop noise spectrum seen by one atom.
    NoiseSpectrum {
        #[command(flatten)]
        loop_args: LoopArgs,
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        /// Unity-gain velocity, m/s.
        #[arg(long)]
        u: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Optimal unity-gain velocity and limiting temperature of the differentiator.
    Temperature {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        mass_amu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Ensemble cooling rates at the optimal scattering rate.
    Ensemble {
        /// Built-in preset (cah-trap, cah-room); repeatable.
        #[arg(long)]
        preset: Vec<String>,
        /// Atom number of a custom sample.
        #[arg(long)]
        n: Option<f64>,
        /// Temperature of a custom sample, K.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        mass_amu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Langevin simulation from the `simulate` config section.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Write per-trajectory traces.
        #[arg(long)]
        traces: bool,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SourceArg {
    Shot,
    Thermal,
    Total,
}

impl From<SourceArg> for SpectrumSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Shot => SpectrumSource::Shot,
            SourceArg::Thermal => SpectrumSource::Thermal,
            SourceArg::Total => SpectrumSource::Total,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Unstable(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Unstable(m) => write!(f, "unstable loop: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<fbcool::Error> for CliError {
    fn from(e: fbcool::Error) -> Self {
        use fbcool::Error as E;
        let msg = e.to_string();
        match e {
            E::UnstableLoop { .. } => CliError::Unstable(msg),
            E::PoleOnAxis { .. }
            | E::NonSmooth { .. }
            | E::Quadrature { .. }
            | E::SimInstability { .. }
            | E::NonStationary { .. } => CliError::Numeric(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbcool: {e}");
            ExitCode::from(e.code())
        }
    }
}
