use std::path::{Path, PathBuf};

use impact_melnikov::flow::FlowOptions;
use impact_melnikov::orbits::{ContinuationOptions, NewtonOptions};
use impact_melnikov::{SystemConfig, TwoZoneSystem};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Contents of a `--config` JSON file. Every field is optional; flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Reserved; no computation is random.
    #[serde(default)]
    pub seed: u64,
    /// Integrator absolute and relative tolerance.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Linear,
    Nonlinear,
}

/// System-level flags shared by every subcommand.
#[derive(Debug, Clone, Default, Serialize, clap::Args)]
pub struct SystemFlags {
    /// Built-in system; replaces any system in the config file.
    #[arg(long, global = true, value_enum)]
    pub system: Option<Builtin>,
    /// Slenderness of the nonlinear block.
    #[arg(long, global = true)]
    pub slenderness: Option<f64>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Restitution coefficient.
    #[arg(long, global = true)]
    pub r: Option<f64>,
}

/// Everything a subcommand needs after merging the config file and flags.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub system: SystemConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub tolerance: f64,
    pub workers: usize,
}

impl Resolved {
    pub fn new(
        file: RunConfig,
        flags: &SystemFlags,
        output_dir: Option<PathBuf>,
        tolerance: Option<f64>,
        workers: Option<usize>,
    ) -> Result<Self, Failure> {
        let omega = flags.omega.or(file.system.as_ref().map(|s| s.omega)).unwrap_or(5.0);
        let mut system = match (flags.system, file.system) {
            (Some(Builtin::Linear), _) | (None, None) => TwoZoneSystem::linear_block(omega).to_config(),
            (Some(Builtin::Nonlinear), _) => {
                TwoZoneSystem::nonlinear_block(flags.slenderness.unwrap_or(0.25), omega)?.to_config()
            }
            (None, Some(s)) => s,
        };
        system.omega = omega;
        if let Some(eps) = flags.eps {
            system.epsilon = eps;
        }
        if let Some(r) = flags.r {
            system.r = r;
        }
        system.build()?;
        let tolerance = tolerance.or(file.tolerance).unwrap_or(FlowOptions::precise().abs_tol);
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Failure::config(format!("tolerance must be positive, got {tolerance}")));
        }
        let workers = workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(Failure::config("workers must be at least 1"));
        }
        let output_dir = output_dir.or(file.output_dir).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&output_dir)
            .map_err(|e| Failure::config(format!("output directory {}: {e}", output_dir.display())))?;
        Ok(Self { system, output_dir, seed: file.seed, tolerance, workers })
    }

    pub fn build(&self) -> TwoZoneSystem {
        self.system.build().expect("validated in Resolved::new")
    }

    pub fn flow(&self) -> FlowOptions {
        FlowOptions::precise().with_tolerance(self.tolerance)
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { flow: self.flow(), ..NewtonOptions::default() }
    }

    /// Library continuation defaults with this run's integrator tolerance.
    pub fn continuation(&self) -> ContinuationOptions {
        let base = ContinuationOptions::default();
        ContinuationOptions { newton: NewtonOptions { flow: self.flow(), ..base.newton }, ..base }
    }
}
