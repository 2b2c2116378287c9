//! Command-line front end: simulation, periods, Melnikov profiles, orbit
//! searches, existence curves, heteroclinic splitting and figure datasets.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impact_melnikov::Error;

use config::{Resolved, RunConfig, SystemFlags};

#[derive(Debug, Parser)]
#[command(name = "impact-melnikov", version, about = "Melnikov analysis of two-zone impact systems")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Integrator absolute and relative tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(flatten)]
    system: SystemFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the impacting system and write the trajectory.
    Simulate(commands::SimulateArgs),
    /// Unperturbed return time alpha(y) and its inverse.
    Period(commands::PeriodArgs),
    /// Subharmonic or heteroclinic Melnikov profile and its zeros.
    Melnikov(commands::MelnikovArgs),
    /// Newton search for an (n, m)-periodic orbit.
    FindOrbit(commands::FindOrbitArgs),
    /// Fold points of dissipative orbits in the (r, eps) plane.
    ExistenceCurve(commands::ExistenceArgs),
    /// Zeros of the splitting distance between the saddle manifolds.
    Heteroclinic(commands::HeteroclinicArgs),
    /// Regenerate the rocking-block figure datasets.
    Reproduce(commands::ReproduceArgs),
}

/// A failed run: bad configuration (exit 2) or a numerical failure (exit 1).
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(Error),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSystem(msg) => Failure::Config(format!("invalid system definition: {msg}")),
            other => Failure::Numeric(other),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "config error: {msg}"),
            Failure::Numeric(e) => write!(f, "numerical failure [{}]: {e}", error_kind(e)),
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidSystem(_) => "invalid_system",
        Error::FoldPoint => "fold_point",
        Error::GrazingImpact { .. } => "grazing_impact",
        Error::NoCrossing { .. } => "no_crossing",
        Error::Domain(_) => "domain",
        Error::Quadrature { .. } => "quadrature",
        Error::Truncation { .. } => "truncation",
        Error::ResidualUnavailable(_) => "residual_unavailable",
        Error::NoConvergence { .. } => "no_convergence",
        Error::SingularJacobian { .. } => "singular_jacobian",
        Error::NoSeed { .. } => "no_seed",
        Error::DegenerateMelnikov => "degenerate_melnikov",
        Error::NoZero { .. } => "no_zero",
        Error::Unsupported(_) => "unsupported",
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let run = Resolved::new(file, &cli.system, cli.out, cli.tolerance, cli.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.workers)
        .build()
        .map_err(|e| Failure::config(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(args) => commands::simulate(&run, args),
        Command::Period(args) => commands::period(&run, args),
        Command::Melnikov(args) => commands::melnikov(&run, args),
        Command::FindOrbit(args) => commands::find_orbit(&run, args),
        Command::ExistenceCurve(args) => commands::existence_curve(&run, args),
        Command::Heteroclinic(args) => commands::heteroclinic(&run, args),
        Command::Reproduce(args) => commands::reproduce(&run, args),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
