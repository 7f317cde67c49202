//! Controlled SIR dynamics and a fixed-step RK4 closed-loop integrator.
//!
//! The model is
//!
//! ```text
//! dS/dt = -beta S I
//! dI/dt =  beta S I - (gamma + u) I
//! dR/dt = (gamma + u) I
//! ```
//!
//! where `u` is the testing-for-isolation rate chosen by a [`Controller`].
//! The controller is queried once per policy interval and its output is held
//! constant while the integrator sub-steps inside the interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyPhase;

/// Tolerance on `S + I + R = 1` accepted by [`SirState::new`].
pub const CONSERVATION_TOL: f64 = 1e-9;
/// States further than this outside `[0, 1]` abort a run.
pub const BLOWUP_TOL: f64 = 1e-6;
/// States within this distance outside `[0, 1]` are clipped back.
pub const CLIP_TOL: f64 = 1e-12;

/// Transmission and removal rates, per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicParams {
    pub beta: f64,
    pub gamma: f64,
}

impl EpidemicParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Susceptible level `(gamma + u) / beta` at which infections stop growing.
    pub fn herd_immunity_level(&self, u: f64) -> f64 {
        (self.gamma + u) / self.beta
    }
}

/// Population fractions in each compartment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn new(s: f64, i: f64, r: f64) -> Result<Self> {
        let state = Self { s, i, r };
        state.validate()?;
        Ok(state)
    }

    /// `S = 1 - i0`, `I = i0`, `R = 0`.
    pub fn with_infected(i0: f64) -> Result<Self> {
        Self::new(1.0 - i0, i0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("S", self.s), ("I", self.i), ("R", self.r)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let total = self.s + self.i + self.r;
        if (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::config(format!("S + I + R = {total}, expected 1")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }

    /// Ever-infected fraction, `I + R`.
    pub fn cumulative_infected(&self) -> f64 {
        self.i + self.r
    }
}

/// Testing-rate bounds and the infection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConstraints {
    pub u_min: f64,
    pub u_max: f64,
    pub i_bar: f64,
}

impl ControlConstraints {
    pub fn new(u_min: f64, u_max: f64, i_bar: f64) -> Result<Self> {
        let c = Self { u_min, u_max, i_bar };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_min.is_finite() && self.u_max.is_finite()) {
            return Err(Error::config("testing-rate bounds must be finite"));
        }
        if !(0.0 <= self.u_min && self.u_min < self.u_max) {
            return Err(Error::config(format!(
                "need 0 <= u_min < u_max, got u_min = {}, u_max = {}",
                self.u_min, self.u_max
            )));
        }
        if !(self.i_bar > 0.0 && self.i_bar <= 1.0) {
            return Err(Error::config(format!("i_bar must lie in (0, 1], got {}", self.i_bar)));
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    pub fn contains(&self, u: f64) -> bool {
        (self.u_min..=self.u_max).contains(&u)
    }
}

/// Time derivative of an [`SirState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirDerivative {
    pub ds: f64,
    pub di: f64,
    pub dr: f64,
}

/// Right-hand side of the controlled SIR system.
///
/// `dr` is formed as `-(ds + di)` so the three rates cancel exactly.
pub fn derivative(state: &SirState, params: &EpidemicParams, u: f64) -> SirDerivative {
    let infection = params.beta * state.s * state.i;
    let ds = -infection;
    let di = infection - (params.gamma + u) * state.i;
    SirDerivative {
        ds,
        di,
        dr: -(ds + di),
    }
}

fn axpy(state: &SirState, h: f64, d: &SirDerivative) -> SirState {
    SirState {
        s: state.s + h * d.ds,
        i: state.i + h * d.di,
        r: state.r + h * d.dr,
    }
}

/// One classical RK4 step with `u` held constant.
pub fn rk4_step(state: &SirState, params: &EpidemicParams, u: f64, h: f64) -> SirState {
    let k1 = derivative(state, params, u);
    let k2 = derivative(&axpy(state, 0.5 * h, &k1), params, u);
    let k3 = derivative(&axpy(state, 0.5 * h, &k2), params, u);
    let k4 = derivative(&axpy(state, h, &k3), params, u);
    let w = h / 6.0;
    SirState {
        s: state.s + w * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds),
        i: state.i + w * (k1.di + 2.0 * k2.di + 2.0 * k3.di + k4.di),
        r: state.r + w * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr),
    }
}

/// Record of a policy demanding more than `u_max` when suppression starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityEvent {
    pub time: f64,
    /// Control the policy's information says is needed to stop growth.
    pub required: f64,
    /// Control actually applied (the clamp to `u_max`).
    pub applied: f64,
}

/// What a controller returns at each query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub u: f64,
    pub phase: PolicyPhase,
    pub infeasibility: Option<InfeasibilityEvent>,
}

impl ControlDecision {
    pub fn new(u: f64, phase: PolicyPhase) -> Self {
        Self {
            u,
            phase,
            infeasibility: None,
        }
    }
}

/// A closed-loop controller. It sees the true state and decides what it
/// observes from it; one handle drives exactly one run.
pub trait Controller {
    fn constraints(&self) -> ControlConstraints;

    fn control(&mut self, time: f64, true_state: &SirState) -> Result<ControlDecision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    /// Final time, days.
    pub horizon: f64,
    /// RK4 step, days.
    pub step: f64,
    /// Time between controller queries, days. Must be a whole number of steps.
    pub policy_interval: f64,
    /// Stop once `I` drops below this value (checked after the first step).
    pub truncate_below: Option<f64>,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            horizon: 600.0,
            step: 0.01,
            policy_interval: 1.0,
            truncate_below: Some(1e-8),
        }
    }
}

impl IntegrationSettings {
    /// Controller queried at every RK4 step.
    pub fn continuous(horizon: f64, step: f64) -> Self {
        Self {
            horizon,
            step,
            policy_interval: step,
            truncate_below: Some(1e-8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.steps_per_query().map(|_| ())
    }

    fn steps_per_query(&self) -> Result<usize> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step) {
            return Err(Error::config(format!(
                "horizon {} must be at least one step ({})",
                self.horizon, self.step
            )));
        }
        let ratio = self.policy_interval / self.step;
        let n = ratio.round();
        if !(n >= 1.0 && (ratio - n).abs() <= 1e-9 * ratio.max(1.0)) {
            return Err(Error::config(format!(
                "policy_interval {} must be a positive multiple of step {}",
                self.policy_interval, self.step
            )));
        }
        if let Some(t) = self.truncate_below {
            if !(t >= 0.0) {
                return Err(Error::config("truncate_below must be non-negative"));
            }
        }
        Ok(n as usize)
    }

    fn total_steps(&self) -> usize {
        (self.horizon / self.step + 1e-9).floor() as usize
    }
}

/// Trajectory of one closed-loop run.
///
/// `controls[k]` is the rate applied on `[times[k], times[k + 1])`; the last
/// entry is the rate that would apply after the final sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub times: Vec<f64>,
    pub states: Vec<SirState>,
    pub controls: Vec<f64>,
    pub phases: Vec<PolicyPhase>,
    /// Sample indices at which the controller was queried.
    pub query_points: Vec<usize>,
    /// Query time at which the policy entered suppression.
    pub t_b: Option<f64>,
    /// Query time at which the policy entered the post-herd-immunity stage.
    pub t_h: Option<f64>,
    /// First time the true `I` reached the threshold from below (linearly interpolated).
    pub threshold_crossing: Option<f64>,
    pub infeasibility: Vec<InfeasibilityEvent>,
    pub constraints: ControlConstraints,
    pub step: f64,
    pub policy_interval: f64,
}

impl SimulationRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("record is never empty")
    }

    /// Largest sampled infected fraction and the time it occurs.
    pub fn peak_infected(&self) -> (f64, f64) {
        self.states
            .iter()
            .zip(&self.times)
            .fold((f64::NEG_INFINITY, 0.0), |(best, bt), (s, &t)| {
                if s.i > best {
                    (s.i, t)
                } else {
                    (best, bt)
                }
            })
    }

    pub fn max_infected(&self) -> f64 {
        self.peak_infected().0
    }

    /// Index of the sample at exactly `t`, if one exists.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.step.max(1.0);
        let idx = self.times.partition_point(|&x| x < t - tol);
        (idx < self.times.len() && (self.times[idx] - t).abs() <= tol).then_some(idx)
    }

    /// State at time `t`, linearly interpolated between samples.
    pub fn state_at(&self, t: f64) -> Result<SirState> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { time: t, start, end });
        }
        let hi = self.times.partition_point(|&x| x < t);
        if hi == 0 || self.times[hi] == t {
            return Ok(self.states[hi]);
        }
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        let (a, b) = (&self.states[lo], &self.states[hi]);
        Ok(SirState {
            s: a.s + w * (b.s - a.s),
            i: a.i + w * (b.i - a.i),
            r: a.r + w * (b.r - a.r),
        })
    }

    /// Samples at which the controller was queried, as `(t, state, u, phase)`.
    pub fn query_samples(&self) -> impl Iterator<Item = (f64, &SirState, f64, PolicyPhase)> + '_ {
        self.query_points
            .iter()
            .map(move |&k| (self.times[k], &self.states[k], self.controls[k], self.phases[k]))
    }
}

/// Integrate the controlled SIR system from `initial` under `controller`.
pub fn integrate(
    initial: &SirState,
    params: &EpidemicParams,
    controller: &mut dyn Controller,
    settings: &IntegrationSettings,
) -> Result<SimulationRecord> {
    initial.validate()?;
    params.validate()?;
    let per_query = settings.steps_per_query()?;
    let constraints = controller.constraints();
    constraints.validate()?;
    let n_steps = settings.total_steps();
    let h = settings.step;

    let capacity = n_steps + 1;
    let mut rec = SimulationRecord {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        phases: Vec::with_capacity(capacity),
        query_points: Vec::with_capacity(n_steps / per_query + 1),
        t_b: None,
        t_h: None,
        threshold_crossing: None,
        infeasibility: Vec::new(),
        constraints,
        step: h,
        policy_interval: settings.policy_interval,
    };

    let mut state = *initial;
    let mut u = constraints.u_min;
    let mut phase = PolicyPhase::PreOutbreak;

    for k in 0..=n_steps {
        let t = k as f64 * h;

        if k % per_query == 0 {
            let decision = controller.control(t, &state)?;
            if !constraints.contains(decision.u) {
                return Err(Error::Domain(format!(
                    "controller returned u = {} outside [{}, {}] at t = {t}",
                    decision.u, constraints.u_min, constraints.u_max
                )));
            }
            if decision.phase < phase {
                return Err(Error::PhaseRegression { time: t });
            }
            if decision.phase >= PolicyPhase::Suppression && rec.t_b.is_none() {
                rec.t_b = Some(t);
            }
            if decision.phase == PolicyPhase::PostHerdImmunity && rec.t_h.is_none() {
                rec.t_h = Some(t);
            }
            if let Some(ev) = decision.infeasibility {
                rec.infeasibility.push(ev);
            }
            phase = decision.phase;
            u = decision.u;
            rec.query_points.push(rec.times.len());
        }

        if rec.threshold_crossing.is_none() && state.i >= constraints.i_bar {
            rec.threshold_crossing = Some(match rec.states.last() {
                Some(prev) if prev.i < constraints.i_bar => {
                    let tp = rec.times[rec.times.len() - 1];
                    tp + (constraints.i_bar - prev.i) / (state.i - prev.i) * (t - tp)
                }
                _ => t,
            });
        }

        rec.times.push(t);
        rec.states.push(state);
        rec.controls.push(u);
        rec.phases.push(phase);

        if k == n_steps {
            break;
        }
        if k > 0 {
            if let Some(tol) = settings.truncate_below {
                if state.i < tol {
                    break;
                }
            }
        }

        state = rk4_step(&state, params, u, h);
        state = check_and_clip(state, t + h)?;
    }

    Ok(rec)
}

fn check_and_clip(state: SirState, time: f64) -> Result<SirState> {
    let bad = |v: f64| !v.is_finite() || v < -BLOWUP_TOL || v > 1.0 + BLOWUP_TOL;
    if bad(state.s) || bad(state.i) || bad(state.r) {
        return Err(Error::StateBlowup {
            time,
            s: state.s,
            i: state.i,
            r: state.r,
        });
    }
    let clip = |v: f64| {
        if v < 0.0 && v >= -CLIP_TOL {
            0.0
        } else if v > 1.0 && v <= 1.0 + CLIP_TOL {
            1.0
        } else {
            v
        }
    };
    Ok(SirState {
        s: clip(state.s),
        i: clip(state.i),
        r: clip(state.r),
    })
}
