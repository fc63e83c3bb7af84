use std::path::{Path, PathBuf};

use apmode_core::modeselect::{Algorithm, ModeSettings};
use apmode_core::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// How the loose/tight CRLB thresholds are derived when none are given:
/// `loose = loose_scale × quantile` of the best all-on CRLB over `samples`
/// RCS draws, `tight = tight_ratio × loose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub samples: usize,
    pub quantile: f64,
    pub loose_scale: f64,
    pub tight_ratio: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { samples: 50, quantile: 0.5, loose_scale: 4.0, tight_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub gamma_c_db: f64,
    /// Explicit CRLB thresholds; empty selects the calibrated loose/tight pair.
    pub eta: Vec<f64>,
    pub calibration: Calibration,
    /// UE counts to sweep; empty uses the scenario's `n_ues`.
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    /// Wall-clock budget per branch-and-bound call.
    pub time_limit_s: Option<f64>,
    pub t_realizations: usize,
    /// Number of candidate UE positions the per-trial UEs are drawn from.
    pub ue_pool: usize,
    /// When set, this many AP positions are drawn and the `n_aps` with the
    /// largest aggregate gain towards the UE pool are deployed.
    pub ap_candidates: Option<usize>,
    /// Target positions to sweep; empty uses the scenario's target.
    pub targets: Vec<[f64; 2]>,
    /// Algorithm knobs; `seed` is replaced by the trial seed.
    pub mode: ModeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Alternating, Algorithm::Sequential, Algorithm::Heuristic],
            gamma_c_db: 20.0,
            eta: Vec::new(),
            calibration: Calibration::default(),
            k_values: Vec::new(),
            trials: 300,
            base_seed: 0,
            output: None,
            time_limit_s: None,
            t_realizations: 1000,
            ue_pool: 64,
            ap_candidates: None,
            targets: Vec::new(),
            mode: ModeSettings::default(),
        }
    }
}

/// Whole config file: a `[scenario]` table and an `[experiment]` table.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn k_values(&self) -> Vec<usize> {
        if self.experiment.k_values.is_empty() {
            vec![self.scenario.n_ues]
        } else {
            self.experiment.k_values.clone()
        }
    }

    pub fn targets(&self) -> Vec<[f64; 2]> {
        if self.experiment.targets.is_empty() {
            vec![self.scenario.target]
        } else {
            self.experiment.targets.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let e = &self.experiment;
        if e.trials == 0 {
            return bad("trials must be at least 1");
        }
        if e.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if e.eta.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("eta values must be positive");
        }
        if !e.gamma_c_db.is_finite() {
            return bad("gamma_c_db must be finite");
        }
        let ks = self.k_values();
        if ks.contains(&0) {
            return bad("UE counts must be positive");
        }
        let pool_needed = self.scenario.ue_positions.as_ref().map_or(e.ue_pool, Vec::len);
        if ks.iter().any(|&k| k > pool_needed) {
            return bad("UE pool is smaller than a requested UE count");
        }
        if e.ap_candidates.is_some_and(|m| m < self.scenario.n_aps) {
            return bad("ap_candidates must be at least n_aps");
        }
        if e.t_realizations == 0 {
            return bad("t_realizations must be positive");
        }
        if e.time_limit_s.is_some_and(|t| !(t > 0.0)) {
            return bad("time_limit_s must be positive");
        }
        let c = &e.calibration;
        if e.eta.is_empty() {
            if c.samples == 0 || !(0.0..=1.0).contains(&c.quantile) || !(c.loose_scale > 0.0) || !(c.tight_ratio > 0.0) {
                return bad("calibration needs samples > 0, quantile in [0, 1] and positive scales");
            }
            if self.scenario.n_aps > 20 {
                return bad("eta calibration enumerates TX/RX splits and supports at most 20 APs");
            }
        }
        Ok(())
    }
}
