use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlConstraints, EpidemicParams, IntegrationSettings, SirState};
use crate::error::{Error, Result};
use crate::harness::pipeline::{InformationSettings, ParamsSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Constant,
    Optimal,
    Naive,
    Robust,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Constant => "constant",
            StrategyKind::Optimal => "optimal",
            StrategyKind::Naive => "naive",
            StrategyKind::Robust => "robust",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    /// Regression window in policy intervals.
    pub window: usize,
    pub inflation: f64,
    #[serde(default)]
    pub params_source: ParamsSource,
    #[serde(default = "one")]
    pub smoothing: usize,
    #[serde(default)]
    pub delay: usize,
}

fn one() -> usize {
    1
}

fn default_truncation() -> Option<f64> {
    Some(1e-8)
}

/// One experiment: model, constraints, cadence, information and strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: EpidemicParams,
    pub constraints: ControlConstraints,
    pub initial: SirState,
    pub horizon: f64,
    pub ode_step: f64,
    pub policy_interval: f64,
    #[serde(default = "default_truncation")]
    pub truncate_below: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    pub estimation: EstimationConfig,
    pub strategies: Vec<StrategyKind>,
    /// Rate for the `constant` strategy; defaults to `u_min`.
    #[serde(default)]
    pub constant_rate: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.constraints.validate()?;
        self.initial.validate()?;
        self.integration().validate()?;
        self.information().validate()?;
        if self.strategies.is_empty() {
            return Err(Error::config("at least one strategy is required"));
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return Err(Error::config("strategies must not repeat"));
        }
        if let Some(u) = self.constant_rate {
            if !self.constraints.contains(u) {
                return Err(Error::config(format!("constant_rate {u} outside the testing-rate bounds")));
            }
        }
        Ok(())
    }

    pub fn integration(&self) -> IntegrationSettings {
        IntegrationSettings {
            horizon: self.horizon,
            step: self.ode_step,
            policy_interval: self.policy_interval,
            truncate_below: self.truncate_below,
        }
    }

    /// Information available to the naive and robust strategies.
    pub fn information(&self) -> InformationSettings {
        InformationSettings {
            snr_db: self.noise.map(|n| n.snr_db),
            seed: self.noise.map_or(0, |n| n.seed),
            params_source: self.estimation.params_source,
            window: self.estimation.window,
            inflation: self.estimation.inflation,
            smoothing: self.estimation.smoothing,
            delay: self.estimation.delay,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(n) = &mut self.noise {
            n.seed = seed;
        }
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = None;
        self
    }

    /// Reference experiment: beta 0.16, gamma 0.033, testing rate in
    /// [0.03, 0.15], threshold 0.01, I(0) = 1e-5, 55 dB noise, daily updates,
    /// all three non-constant strategies. Matches `configs/reference.toml`.
    pub fn reference() -> Self {
        Self {
            params: EpidemicParams { beta: 0.16, gamma: 0.033 },
            constraints: ControlConstraints {
                u_min: 0.03,
                u_max: 0.15,
                i_bar: 0.01,
            },
            initial: SirState {
                s: 1.0 - 1e-5,
                i: 1e-5,
                r: 0.0,
            },
            horizon: 800.0,
            ode_step: 0.01,
            policy_interval: 1.0,
            truncate_below: default_truncation(),
            noise: Some(NoiseConfig { snr_db: 55.0, seed: 1 }),
            estimation: EstimationConfig {
                window: 14,
                inflation: 0.05,
                params_source: ParamsSource::Regression,
                smoothing: 1,
                delay: 0,
            },
            strategies: vec![StrategyKind::Optimal, StrategyKind::Naive, StrategyKind::Robust],
            constant_rate: None,
        }
    }

    /// No noise; the robust strategy sees true values widened by 5%.
    pub fn dominance() -> Self {
        let mut cfg = Self::reference().without_noise();
        cfg.estimation.params_source = ParamsSource::Truth;
        cfg.strategies = vec![StrategyKind::Optimal, StrategyKind::Robust];
        cfg
    }
}
