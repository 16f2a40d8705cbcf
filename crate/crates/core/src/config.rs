//! Experiment configuration files.
//!
//! Configs are TOML. Every key is optional; omitted keys take the reference
//! setup (see [`ExperimentConfig::default`]). The timing grid may be signed,
//! e.g. `theta_min = -2`; it is shifted into the model's nonnegative window
//! and the shift is reported alongside the results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::estimator::{EstimatorOptions, GridSpec, Method};
use crate::evaluation::{PilotMode, SelectionMode, SweepPlan, TruthMode};
use crate::model::SystemConfig;
use crate::{Error, Result};

/// Environment variable naming the output directory when the config has none.
pub const OUTPUT_DIR_ENV: &str = "MLSYNC_OUTPUT_DIR";
/// Output directory used when neither the config nor the environment sets one.
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: usize,
    /// Samples kept per receive antenna (`M`).
    pub measurements: usize,
    pub snr_db: Vec<f64>,
    pub estimators: Vec<Method>,
    pub truth: TruthMode,
    pub pilots: PilotMode,
    pub selection: SelectionMode,
    /// Threshold `p` in the timing failure probability `Pr[|θ̂ − θ| ≥ p]`.
    pub timing_p: u64,
    pub noiseless: bool,
    /// Worker threads; defaults to the available parallelism.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let plan = SweepPlan::reference();
        ExperimentConfig {
            master_seed: plan.master_seed,
            trials: plan.trials,
            measurements: plan.measurements,
            snr_db: plan.snr_db,
            estimators: plan.estimators,
            truth: plan.truth,
            pilots: plan.pilots,
            selection: plan.selection,
            timing_p: plan.timing_p,
            noiseless: plan.noiseless,
            workers: None,
            output_dir: None,
            system: plan.system,
            grid: plan.grids,
        }
    }
}

impl ExperimentConfig {
    /// Offset that moves the configured timing grid to start at or above zero.
    pub fn theta_shift(&self) -> i64 {
        (-self.grid.theta_min).max(0)
    }

    /// The validated sweep this config describes.
    pub fn plan(&self) -> Result<SweepPlan> {
        let shift = self.theta_shift();
        let grids = GridSpec {
            theta_min: self.grid.theta_min + shift,
            theta_max: self.grid.theta_max + shift,
            ..self.grid
        };
        let plan = SweepPlan {
            system: self.system,
            grids,
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            measurements: self.measurements,
            estimators: self.estimators.clone(),
            truth: self.truth,
            pilots: self.pilots,
            selection: self.selection,
            master_seed: self.master_seed,
            timing_p: self.timing_p,
            theta_shift: shift,
            noiseless: self.noiseless,
            workers: self.workers,
            options: EstimatorOptions::default(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    /// Config value, then `$MLSYNC_OUTPUT_DIR`, then `results`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Under-determined least squares: fewer kept samples than channel unknowns.
    pub fn ls_underdetermined(&self) -> bool {
        self.measurements * self.system.rx < self.system.channel_len()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::InvalidConfig(format!("cannot serialise config: {e}")))
    }
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn write_config(path: impl AsRef<Path>, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::write(path, cfg.to_toml()?)?;
    Ok(())
}
