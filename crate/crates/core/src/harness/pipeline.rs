//! What a policy gets to see at each query: (optionally delayed, noisy,
//! smoothed) observations, parameter estimates and the uncertainty envelope.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlConstraints, ControlDecision, Controller, EpidemicParams, SirState};
use crate::error::{Error, Result};
use crate::estimation::{
    envelope_slice, estimate_params, EnvelopeSettings, EnvelopeSlice, NoiseChannel, NoisyObservation,
    ParamEstimate, UncertaintyEnvelope, DEFAULT_STATE_FLOOR,
};
use crate::policy::{PointParams, Policy, PolicyInput};

/// Where parameter estimates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsSource {
    /// Least-squares fit over a trailing window of observations.
    #[default]
    Regression,
    /// The true rates, as a zero-width estimate.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationSettings {
    /// `None` (or `+inf`) observes the true state.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub params_source: ParamsSource,
    /// Regression window, in policy intervals.
    pub window: usize,
    pub inflation: f64,
    /// Trailing mean over this many observations before they reach the policy.
    pub smoothing: usize,
    /// Observations lag the truth by this many policy intervals.
    pub delay: usize,
}

impl InformationSettings {
    /// True state and true rates, no widening.
    pub fn perfect() -> Self {
        Self {
            snr_db: None,
            seed: 0,
            params_source: ParamsSource::Truth,
            window: 14,
            inflation: 0.0,
            smoothing: 1,
            delay: 0,
        }
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self.snr_db, Some(x) if x.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config(format!("estimation window must be >= 2, got {}", self.window)));
        }
        if !(self.inflation >= 0.0 && self.inflation.is_finite()) {
            return Err(Error::config(format!("inflation must be >= 0, got {}", self.inflation)));
        }
        if self.smoothing == 0 {
            return Err(Error::config("smoothing window must be >= 1"));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(Error::config(format!("invalid SNR {snr} dB")));
            }
        }
        Ok(())
    }
}

/// Stateful observation/estimation chain for one run.
#[derive(Debug, Clone)]
pub struct InformationPipeline {
    true_params: EpidemicParams,
    settings: InformationSettings,
    envelope_settings: EnvelopeSettings,
    noise: Option<NoiseChannel>,
    truth: Vec<(f64, SirState)>,
    observations: Vec<NoisyObservation>,
    /// Query index whose truth each observation reports.
    observed_query: Vec<usize>,
    controls: Vec<f64>,
    estimates: Vec<Option<ParamEstimate>>,
    envelope: Vec<EnvelopeSlice>,
}

impl InformationPipeline {
    pub fn new(true_params: EpidemicParams, settings: InformationSettings) -> Result<Self> {
        settings.validate()?;
        let noise = match settings.snr_db {
            Some(snr) if snr.is_finite() => Some(NoiseChannel::new(snr, settings.seed)?),
            _ => None,
        };
        let envelope_settings = EnvelopeSettings {
            inflation: settings.inflation,
            state_floor: if noise.is_some() { DEFAULT_STATE_FLOOR } else { 0.0 },
        };
        Ok(Self {
            true_params,
            settings,
            envelope_settings,
            noise,
            truth: Vec::new(),
            observations: Vec::new(),
            observed_query: Vec::new(),
            controls: Vec::new(),
            estimates: Vec::new(),
            envelope: Vec::new(),
        })
    }

    pub fn perfect(true_params: EpidemicParams) -> Self {
        Self::new(true_params, InformationSettings::perfect()).expect("perfect settings are valid")
    }

    pub fn observations(&self) -> &[NoisyObservation] {
        &self.observations
    }

    pub fn estimates(&self) -> &[Option<ParamEstimate>] {
        &self.estimates
    }

    pub fn envelope(&self) -> UncertaintyEnvelope {
        UncertaintyEnvelope {
            slices: self.envelope.clone(),
        }
    }

    /// Truth as observed at each query, for coverage audits.
    pub fn truth(&self) -> &[(f64, SirState)] {
        &self.truth
    }

    /// Build the policy input for a query at `time`.
    pub fn input(&mut self, time: f64, true_state: &SirState) -> PolicyInput {
        self.truth.push((time, *true_state));
        let q = (self.truth.len() - 1).saturating_sub(self.settings.delay);
        let (t_obs, seen) = self.truth[q];
        let obs = match &mut self.noise {
            Some(ch) => ch.observe(t_obs, &seen),
            None => NoisyObservation::exact(t_obs, &seen),
        };
        self.observations.push(obs);
        self.observed_query.push(q);

        let estimate = self.estimate();
        self.estimates.push(estimate);

        let smoothed = self.smoothed();
        let slice = envelope_slice(estimate.as_ref(), &smoothed, &self.envelope_settings);
        self.envelope.push(slice);

        PolicyInput {
            time,
            s_obs: smoothed.s_obs,
            i_obs: smoothed.i_obs,
            params: estimate.map(|e| PointParams {
                beta: e.beta_hat,
                gamma: e.gamma_hat,
            }),
            envelope: Some(slice),
        }
    }

    /// Remember the rate applied after the latest query.
    pub fn record_control(&mut self, u: f64) {
        self.controls.push(u);
    }

    fn estimate(&self) -> Option<ParamEstimate> {
        match self.settings.params_source {
            ParamsSource::Truth => Some(ParamEstimate::exact(self.true_params.beta, self.true_params.gamma)),
            ParamsSource::Regression => {
                let n = self.observations.len();
                if n < self.settings.window + 1 {
                    return None;
                }
                // Rate applied over the interval each observation describes.
                let aligned: Vec<f64> = self.observed_query[..n - 1]
                    .iter()
                    .map(|&q| self.controls[q])
                    .collect();
                estimate_params(&self.observations, &aligned, self.settings.window)
                    .ok()
                    .filter(informative)
            }
        }
    }

    fn smoothed(&self) -> NoisyObservation {
        let latest = *self.observations.last().expect("called after push");
        let m = self.settings.smoothing.min(self.observations.len());
        if m == 1 {
            return latest;
        }
        let tail = &self.observations[self.observations.len() - m..];
        let mean = |f: fn(&NoisyObservation) -> f64| tail.iter().map(f).sum::<f64>() / m as f64;
        NoisyObservation {
            time: latest.time,
            s_obs: mean(|o| o.s_obs),
            i_obs: mean(|o| o.i_obs),
            r_obs: mean(|o| o.r_obs),
        }
    }
}

/// A confidence interval entirely below zero truncates to `[0, 0]`, which
/// would claim the rate is exactly zero. Such fits carry no information about
/// a nonnegative rate and are dropped.
fn informative(e: &ParamEstimate) -> bool {
    e.beta_interval.high > 0.0 && e.gamma_interval.high > 0.0
}

/// A policy together with the information chain that feeds it.
pub struct ClosedLoop {
    policy: Box<dyn Policy>,
    info: InformationPipeline,
}

impl ClosedLoop {
    pub fn new(policy: Box<dyn Policy>, info: InformationPipeline) -> Self {
        Self { policy, info }
    }

    /// Policy fed the true state and true rates.
    pub fn perfect(policy: impl Policy + 'static, params: EpidemicParams) -> Self {
        Self::new(Box::new(policy), InformationPipeline::perfect(params))
    }

    pub fn info(&self) -> &InformationPipeline {
        &self.info
    }

    pub fn into_info(self) -> InformationPipeline {
        self.info
    }
}

impl Controller for ClosedLoop {
    fn constraints(&self) -> ControlConstraints {
        self.policy.constraints()
    }

    fn control(&mut self, time: f64, true_state: &SirState) -> Result<ControlDecision> {
        let input = self.info.input(time, true_state);
        let decision = self.policy.decide(&input)?;
        self.info.record_control(decision.u);
        Ok(decision)
    }
}
