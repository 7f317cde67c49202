//! Observation noise, regression estimates of `beta`/`gamma`, and interval
//! envelopes around parameters and states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::SirState;
use crate::error::{Error, Result};

/// Additive floor on state half-widths when observations are noisy.
pub const DEFAULT_STATE_FLOOR: f64 = 1e-6;

/// Closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if low.is_nan() || high.is_nan() || low > high {
            return Err(Error::Domain(format!("empty interval [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    pub fn point(x: f64) -> Self {
        Self { low: x, high: x }
    }

    pub fn unbounded_above() -> Self {
        Self {
            low: 0.0,
            high: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.low <= other.low && other.high <= self.high
    }
}

/// Noisy measurement of the compartments on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyObservation {
    pub time: f64,
    pub s_obs: f64,
    pub i_obs: f64,
    pub r_obs: f64,
}

impl NoisyObservation {
    pub fn exact(time: f64, state: &SirState) -> Self {
        Self {
            time,
            s_obs: state.s,
            i_obs: state.i,
            r_obs: state.r,
        }
    }
}

fn noise_scale(snr_db: f64) -> f64 {
    // sigma^2 = power / 10^(snr/10)
    10f64.powf(-snr_db / 20.0)
}

fn clip_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Corrupt a whole trajectory with per-compartment Gaussian noise.
///
/// Each compartment's noise variance is its mean squared value over the
/// sequence divided by `10^(snr_db / 10)`. `snr_db = +inf` returns the truth.
pub fn add_noise(
    times: &[f64],
    truth: &[SirState],
    snr_db: f64,
    seed: u64,
) -> Result<Vec<NoisyObservation>> {
    if times.len() != truth.len() {
        return Err(Error::Domain("times and states differ in length".into()));
    }
    if truth.is_empty() {
        return Err(Error::Domain("cannot add noise to an empty sequence".into()));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::config(format!("invalid SNR {snr_db} dB")));
    }
    if snr_db == f64::INFINITY {
        return Ok(times
            .iter()
            .zip(truth)
            .map(|(&t, s)| NoisyObservation::exact(t, s))
            .collect());
    }
    let n = truth.len() as f64;
    let rms = |f: fn(&SirState) -> f64| (truth.iter().map(|x| f(x).powi(2)).sum::<f64>() / n).sqrt();
    let scale = noise_scale(snr_db);
    let sigma = [rms(|x| x.s) * scale, rms(|x| x.i) * scale, rms(|x| x.r) * scale];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(times
        .iter()
        .zip(truth)
        .map(|(&t, x)| {
            let mut z = [0.0; 3];
            for v in &mut z {
                *v = rng.sample(StandardNormal);
            }
            NoisyObservation {
                time: t,
                s_obs: clip_unit(x.s + sigma[0] * z[0]),
                i_obs: clip_unit(x.i + sigma[1] * z[1]),
                r_obs: clip_unit(x.r + sigma[2] * z[2]),
            }
        })
        .collect())
}

/// Causal noise source for closed-loop runs.
///
/// The reference power of each compartment is the running mean square of
/// everything observed so far, so the noise never depends on the future.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    rng: ChaCha8Rng,
    scale: f64,
    sum_sq: [f64; 3],
    count: usize,
}

impl NoiseChannel {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::config(format!("invalid SNR {snr_db} dB")));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale: noise_scale(snr_db),
            sum_sq: [0.0; 3],
            count: 0,
        })
    }

    pub fn observe(&mut self, time: f64, truth: &SirState) -> NoisyObservation {
        let x = [truth.s, truth.i, truth.r];
        self.count += 1;
        let mut out = [0.0; 3];
        for c in 0..3 {
            self.sum_sq[c] += x[c] * x[c];
            let sigma = (self.sum_sq[c] / self.count as f64).sqrt() * self.scale;
            let z: f64 = self.rng.sample(StandardNormal);
            out[c] = clip_unit(x[c] + sigma * z);
        }
        NoisyObservation {
            time,
            s_obs: out[0],
            i_obs: out[1],
            r_obs: out[2],
        }
    }
}

/// `10 log10(mean(signal^2) / mean((noisy - signal)^2))`.
pub fn empirical_snr_db(signal: &[f64], noisy: &[f64]) -> f64 {
    let p_signal: f64 = signal.iter().map(|x| x * x).sum();
    let p_noise: f64 = signal.iter().zip(noisy).map(|(x, y)| (y - x).powi(2)).sum();
    10.0 * (p_signal / p_noise).log10()
}

/// Regression estimate of the rates over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub beta_hat: f64,
    pub gamma_hat: f64,
    pub beta_interval: Interval,
    pub gamma_interval: Interval,
    /// Number of one-interval transitions used.
    pub window_len: usize,
}

impl ParamEstimate {
    /// Zero-width estimate at known values.
    pub fn exact(beta: f64, gamma: f64) -> Self {
        Self {
            beta_hat: beta,
            gamma_hat: gamma,
            beta_interval: Interval::point(beta),
            gamma_interval: Interval::point(gamma),
            window_len: 0,
        }
    }
}

struct OriginFit {
    slope: f64,
    half_width: f64,
}

/// Least squares `y = slope * x` with a two-sided 95% t interval.
fn fit_through_origin(x: &[f64], y: &[f64], what: &str) -> Result<OriginFit> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateData(format!("no signal for {what} in window")));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let dof = x.len() - 1;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let se = (sse / dof as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(OriginFit {
        slope,
        half_width: t * se,
    })
}

fn truncated(fit: &OriginFit) -> (f64, Interval) {
    let low = (fit.slope - fit.half_width).max(0.0);
    let high = (fit.slope + fit.half_width).max(0.0);
    (fit.slope.max(0.0), Interval { low, high })
}

/// Estimate `beta` and `gamma` from the last `window` transitions.
///
/// With `dt_k = t_{k+1} - t_k` the regressions are
/// `S_{k+1} - S_k = -beta S_k I_k dt_k` and
/// `R_{k+1} - R_k - u_k I_k dt_k = gamma I_k dt_k`, where `controls[k]` is the
/// testing rate applied between observations `k` and `k + 1`.
pub fn estimate_params(
    observations: &[NoisyObservation],
    controls: &[f64],
    window: usize,
) -> Result<ParamEstimate> {
    if window < 2 {
        return Err(Error::config(format!("regression window must be >= 2, got {window}")));
    }
    if observations.len() < window + 1 {
        return Err(Error::DegenerateData(format!(
            "need {} observations for a window of {window}, have {}",
            window + 1,
            observations.len()
        )));
    }
    let first = observations.len() - 1 - window;
    if controls.len() < observations.len() - 1 {
        return Err(Error::Domain("missing applied controls for the window".into()));
    }

    let mut xs = Vec::with_capacity(window);
    let mut ys = Vec::with_capacity(window);
    let mut xg = Vec::with_capacity(window);
    let mut yg = Vec::with_capacity(window);
    for k in first..observations.len() - 1 {
        let (a, b) = (&observations[k], &observations[k + 1]);
        let dt = b.time - a.time;
        xs.push(a.s_obs * a.i_obs * dt);
        ys.push(a.s_obs - b.s_obs);
        xg.push(a.i_obs * dt);
        yg.push(b.r_obs - a.r_obs - controls[k] * a.i_obs * dt);
    }

    let (beta_hat, beta_interval) = truncated(&fit_through_origin(&xs, &ys, "beta")?);
    let (gamma_hat, gamma_interval) = truncated(&fit_through_origin(&xg, &yg, "gamma")?);
    Ok(ParamEstimate {
        beta_hat,
        gamma_hat,
        beta_interval,
        gamma_interval,
        window_len: window,
    })
}

/// Interval bounds on parameters and states at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSlice {
    pub time: f64,
    pub beta: Interval,
    pub gamma: Interval,
    pub s: Interval,
    pub i: Interval,
}

impl EnvelopeSlice {
    /// Degenerate slice at known values.
    pub fn exact(time: f64, beta: f64, gamma: f64, state: &SirState) -> Self {
        Self {
            time,
            beta: Interval::point(beta),
            gamma: Interval::point(gamma),
            s: Interval::point(state.s),
            i: Interval::point(state.i),
        }
    }

    /// Whether all four intervals contain the given truth.
    pub fn covers(&self, beta: f64, gamma: f64, state: &SirState) -> bool {
        self.beta.contains(beta)
            && self.gamma.contains(gamma)
            && self.s.contains(state.s)
            && self.i.contains(state.i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSettings {
    /// Relative widening of every interval.
    pub inflation: f64,
    /// Absolute addition to state half-widths.
    pub state_floor: f64,
}

impl EnvelopeSettings {
    pub fn new(inflation: f64) -> Self {
        Self {
            inflation,
            state_floor: DEFAULT_STATE_FLOOR,
        }
    }
}

fn state_interval(x: f64, settings: &EnvelopeSettings) -> Interval {
    let half = settings.inflation * x.abs() + settings.state_floor;
    Interval {
        low: clip_unit(x - half),
        high: clip_unit(x + half),
    }
}

fn widen(iv: &Interval, inflation: f64) -> Interval {
    Interval {
        low: iv.low * (1.0 - inflation).max(0.0),
        high: iv.high * (1.0 + inflation),
    }
}

/// Envelope slice from an optional estimate and the observation of the day.
///
/// A missing estimate leaves the parameters unconstrained, `[0, inf)`.
pub fn envelope_slice(
    estimate: Option<&ParamEstimate>,
    observation: &NoisyObservation,
    settings: &EnvelopeSettings,
) -> EnvelopeSlice {
    let (beta, gamma) = match estimate {
        Some(e) => (
            widen(&e.beta_interval, settings.inflation),
            widen(&e.gamma_interval, settings.inflation),
        ),
        None => (Interval::unbounded_above(), Interval::unbounded_above()),
    };
    EnvelopeSlice {
        time: observation.time,
        beta,
        gamma,
        s: state_interval(observation.s_obs, settings),
        i: state_interval(observation.i_obs, settings),
    }
}

/// Day-indexed bounds on `beta`, `gamma`, `S` and `I`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEnvelope {
    pub slices: Vec<EnvelopeSlice>,
}

impl UncertaintyEnvelope {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn beta_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.slices.iter().map(|s| s.beta)
    }

    pub fn gamma_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.slices.iter().map(|s| s.gamma)
    }

    pub fn s_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.slices.iter().map(|s| s.s)
    }

    pub fn i_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.slices.iter().map(|s| s.i)
    }

    /// Slice with the latest time not after `t`.
    pub fn at(&self, t: f64) -> Option<&EnvelopeSlice> {
        let idx = self.slices.partition_point(|s| s.time <= t + 1e-9);
        idx.checked_sub(1).map(|k| &self.slices[k])
    }
}

/// Pair each estimate with its observation and widen by `inflation`.
pub fn build_envelope(
    estimates: &[ParamEstimate],
    observations: &[NoisyObservation],
    inflation: f64,
) -> Result<UncertaintyEnvelope> {
    build_envelope_with(estimates, observations, &EnvelopeSettings::new(inflation))
}

pub fn build_envelope_with(
    estimates: &[ParamEstimate],
    observations: &[NoisyObservation],
    settings: &EnvelopeSettings,
) -> Result<UncertaintyEnvelope> {
    if !(settings.inflation >= 0.0 && settings.inflation.is_finite()) {
        return Err(Error::config(format!("inflation must be >= 0, got {}", settings.inflation)));
    }
    if estimates.len() != observations.len() {
        return Err(Error::Domain(format!(
            "{} estimates for {} observations",
            estimates.len(),
            observations.len()
        )));
    }
    Ok(UncertaintyEnvelope {
        slices: estimates
            .iter()
            .zip(observations)
            .map(|(e, o)| envelope_slice(Some(e), o, settings))
            .collect(),
    })
}
