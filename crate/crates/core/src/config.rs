//! Whole-run configuration document: one JSON object with `env`, `tabular`,
//! `d3ql` and `experiment` sections. Missing sections fall back to the
//! reference defaults; unknown keys anywhere are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::d3ql::D3QLConfig;
use crate::env::{ConfigError, EnvConfig};
use crate::tabular::QLConfig;

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Env(#[from] ConfigError),
    #[error("invalid {section} section: {reason}")]
    Section { section: &'static str, reason: String },
}

/// Settings for the experiment drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub sweep_z: Vec<f64>,
    pub eval_horizon: u64,
    pub trace_horizon: u64,
    /// Moving-average window (slots) for convergence curves.
    pub window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            sweep_z: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            eval_horizon: 10_000,
            trace_horizon: 300,
            window: 1_000,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub env: EnvConfig,
    pub tabular: QLConfig,
    pub d3ql: D3QLConfig,
    pub experiment: ExperimentConfig,
}

impl AppConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigLoadError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: AppConfig =
            serde_json::from_str(&text).map_err(|source| ConfigLoadError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigLoadError> {
        self.env.validate()?;
        let section = |section, reason: String| ConfigLoadError::Section { section, reason };
        if !(0.0..1.0).contains(&self.tabular.learning_rate) {
            return Err(section("tabular", "learning_rate must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.tabular.discount) {
            return Err(section("tabular", "discount must be in [0, 1)".into()));
        }
        for (name, eps) in [
            ("epsilon_start", self.tabular.epsilon_start),
            ("epsilon_end", self.tabular.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(section("tabular", format!("{name} must be in [0, 1]")));
            }
        }
        if self.tabular.epsilon_end > self.tabular.epsilon_start {
            return Err(section(
                "tabular",
                "epsilon_end must not exceed epsilon_start".into(),
            ));
        }
        if !(self.tabular.epsilon_decay_fraction > 0.0
            && self.tabular.epsilon_decay_fraction <= 1.0)
        {
            return Err(section(
                "tabular",
                "epsilon_decay_fraction must be in (0, 1]".into(),
            ));
        }
        self.d3ql
            .validate()
            .map_err(|e| section("d3ql", e.to_string()))?;
        if self.experiment.seeds.is_empty() {
            return Err(section("experiment", "seeds must be non-empty".into()));
        }
        if self.experiment.sweep_z.iter().any(|&z| z < 1.0 || z.is_nan()) {
            return Err(section(
                "experiment",
                "sweep_z values must be at least 1".into(),
            ));
        }
        if self.experiment.eval_horizon == 0 || self.experiment.trace_horizon == 0 {
            return Err(section("experiment", "horizons must be at least 1".into()));
        }
        if self.experiment.window == 0 {
            return Err(section("experiment", "window must be at least 1".into()));
        }
        Ok(())
    }
}
