//! Testing policies.
//!
//! All non-constant policies share one three-stage structure: hold the floor
//! rate until the (observed or overestimated) infections reach the threshold,
//! then apply the rate that stops infection growth, then return to the floor
//! once that rate no longer exceeds it. They differ only in what information
//! feeds the two switching tests and the suppression rate:
//!
//! | policy  | infection test | suppression rate                       |
//! |---------|----------------|----------------------------------------|
//! | optimal | `I`            | `beta S - gamma` (true values)         |
//! | naive   | `I_hat`        | `beta_hat S_hat - gamma_hat`           |
//! | robust  | `I_max`        | `beta_max S_max - gamma_min`           |

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlConstraints, ControlDecision, EpidemicParams, InfeasibilityEvent};
use crate::error::{Error, Result};
use crate::estimation::EnvelopeSlice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyPhase {
    PreOutbreak,
    Suppression,
    PostHerdImmunity,
}

impl PolicyPhase {
    pub const ALL: [PolicyPhase; 3] = [
        PolicyPhase::PreOutbreak,
        PolicyPhase::Suppression,
        PolicyPhase::PostHerdImmunity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyPhase::PreOutbreak => "pre_outbreak",
            PolicyPhase::Suppression => "suppression",
            PolicyPhase::PostHerdImmunity => "post_herd_immunity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for PolicyPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Point values of the rates as seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub beta: f64,
    pub gamma: f64,
}

impl From<EpidemicParams> for PointParams {
    fn from(p: EpidemicParams) -> Self {
        Self {
            beta: p.beta,
            gamma: p.gamma,
        }
    }
}

/// Everything a policy may look at when queried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInput {
    pub time: f64,
    /// Observed susceptible fraction (true or noisy, depending on wiring).
    pub s_obs: f64,
    /// Observed infected fraction.
    pub i_obs: f64,
    pub params: Option<PointParams>,
    pub envelope: Option<EnvelopeSlice>,
}

pub trait Policy: Send {
    fn constraints(&self) -> ControlConstraints;

    fn phase(&self) -> PolicyPhase;

    fn decide(&mut self, input: &PolicyInput) -> Result<ControlDecision>;
}

/// The shared stage machine. Phases only move forward.
#[derive(Debug, Clone)]
struct Stages {
    constraints: ControlConstraints,
    phase: PolicyPhase,
}

impl Stages {
    fn new(constraints: ControlConstraints) -> Result<Self> {
        constraints.validate()?;
        Ok(Self {
            constraints,
            phase: PolicyPhase::PreOutbreak,
        })
    }

    /// `infected` drives the outbreak test, `required` is the rate that holds
    /// infections flat according to the policy's information. NaN counts as
    /// unbounded.
    fn advance(&mut self, time: f64, infected: f64, required: f64) -> ControlDecision {
        let c = self.constraints;
        let mut entering = false;
        if self.phase == PolicyPhase::PreOutbreak && infected >= c.i_bar {
            self.phase = PolicyPhase::Suppression;
            entering = true;
        }
        if self.phase == PolicyPhase::Suppression {
            let required = if required.is_nan() { f64::INFINITY } else { required };
            // Equality belongs to the post-herd-immunity stage.
            if required <= c.u_min {
                self.phase = PolicyPhase::PostHerdImmunity;
            } else {
                let u = c.clamp(required);
                let infeasibility = (entering && required > c.u_max).then_some(InfeasibilityEvent {
                    time,
                    required,
                    applied: u,
                });
                return ControlDecision {
                    u,
                    phase: self.phase,
                    infeasibility,
                };
            }
        }
        ControlDecision::new(c.u_min, self.phase)
    }
}

/// Fixed testing rate.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    u: f64,
    constraints: ControlConstraints,
}

impl ConstantPolicy {
    pub fn new(u: f64, constraints: ControlConstraints) -> Result<Self> {
        constraints.validate()?;
        if !constraints.contains(u) {
            return Err(Error::config(format!(
                "constant rate {u} outside [{}, {}]",
                constraints.u_min, constraints.u_max
            )));
        }
        Ok(Self { u, constraints })
    }
}

impl Policy for ConstantPolicy {
    fn constraints(&self) -> ControlConstraints {
        self.constraints
    }

    fn phase(&self) -> PolicyPhase {
        PolicyPhase::PreOutbreak
    }

    fn decide(&mut self, _input: &PolicyInput) -> Result<ControlDecision> {
        Ok(ControlDecision::new(self.u, PolicyPhase::PreOutbreak))
    }
}

/// Three-stage policy with perfect knowledge of the rates; reads the observed
/// state from its input, which the caller wires to the true state.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    params: EpidemicParams,
    stages: Stages,
}

impl OptimalPolicy {
    pub fn new(params: EpidemicParams, constraints: ControlConstraints) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            stages: Stages::new(constraints)?,
        })
    }
}

impl Policy for OptimalPolicy {
    fn constraints(&self) -> ControlConstraints {
        self.stages.constraints
    }

    fn phase(&self) -> PolicyPhase {
        self.stages.phase
    }

    fn decide(&mut self, input: &PolicyInput) -> Result<ControlDecision> {
        let required = self.params.beta * input.s_obs - self.params.gamma;
        Ok(self.stages.advance(input.time, input.i_obs, required))
    }
}

/// Three-stage policy that plugs point estimates in place of the truth.
///
/// Without an estimate the suppression rate is treated as unbounded and the
/// policy applies `u_max`.
#[derive(Debug, Clone)]
pub struct NaivePolicy {
    stages: Stages,
}

impl NaivePolicy {
    pub fn new(constraints: ControlConstraints) -> Result<Self> {
        Ok(Self {
            stages: Stages::new(constraints)?,
        })
    }
}

impl Policy for NaivePolicy {
    fn constraints(&self) -> ControlConstraints {
        self.stages.constraints
    }

    fn phase(&self) -> PolicyPhase {
        self.stages.phase
    }

    fn decide(&mut self, input: &PolicyInput) -> Result<ControlDecision> {
        let required = input
            .params
            .map_or(f64::INFINITY, |p| p.beta * input.s_obs - p.gamma);
        Ok(self.stages.advance(input.time, input.i_obs, required))
    }
}

/// Three-stage policy on the worst-case corner of an uncertainty envelope.
#[derive(Debug, Clone)]
pub struct RobustPolicy {
    stages: Stages,
}

impl RobustPolicy {
    pub fn new(constraints: ControlConstraints) -> Result<Self> {
        Ok(Self {
            stages: Stages::new(constraints)?,
        })
    }

    /// `beta_max S_max - gamma_min`.
    pub fn worst_case_required(env: &EnvelopeSlice) -> f64 {
        env.beta.high * env.s.high - env.gamma.low
    }
}

impl Policy for RobustPolicy {
    fn constraints(&self) -> ControlConstraints {
        self.stages.constraints
    }

    fn phase(&self) -> PolicyPhase {
        self.stages.phase
    }

    fn decide(&mut self, input: &PolicyInput) -> Result<ControlDecision> {
        let env = input
            .envelope
            .ok_or_else(|| Error::config("robust policy queried without an uncertainty envelope"))?;
        let required = Self::worst_case_required(&env);
        Ok(self.stages.advance(input.time, env.i.high, required))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SirState;
    use crate::estimation::Interval;

    fn c() -> ControlConstraints {
        ControlConstraints::new(0.03, 0.15, 0.01).unwrap()
    }

    fn p() -> EpidemicParams {
        EpidemicParams::new(0.16, 0.033).unwrap()
    }

    fn input(t: f64, s: f64, i: f64) -> PolicyInput {
        PolicyInput {
            time: t,
            s_obs: s,
            i_obs: i,
            params: Some(p().into()),
            envelope: Some(EnvelopeSlice::exact(t, 0.16, 0.033, &SirState { s, i, r: 1.0 - s - i })),
        }
    }

    #[test]
    fn constant_rejects_out_of_bounds() {
        assert!(ConstantPolicy::new(0.2, c()).is_err());
        assert!(ConstantPolicy::new(0.01, c()).is_err());
        let mut k = ConstantPolicy::new(0.03, c()).unwrap();
        for t in 0..5 {
            assert_eq!(k.decide(&input(t as f64, 0.5, 0.5)).unwrap().u, 0.03);
        }
    }

    #[test]
    fn optimal_three_stages() {
        let mut pol = OptimalPolicy::new(p(), c()).unwrap();
        let d = pol.decide(&input(0.0, 0.99, 0.005)).unwrap();
        assert_eq!((d.u, d.phase), (0.03, PolicyPhase::PreOutbreak));

        let d = pol.decide(&input(1.0, 0.6, 0.01)).unwrap();
        assert_eq!(d.phase, PolicyPhase::Suppression);
        assert!((d.u - 0.063).abs() < 1e-15);
        assert!(d.infeasibility.is_none());

        // Dropping below the threshold does not leave suppression.
        let d = pol.decide(&input(2.0, 0.59, 0.002)).unwrap();
        assert_eq!(d.phase, PolicyPhase::Suppression);

        // beta S = gamma + u_min exactly: post stage.
        let s_h = (0.033 + 0.03) / 0.16;
        let d = pol.decide(&input(3.0, s_h, 0.01)).unwrap();
        assert_eq!((d.u, d.phase), (0.03, PolicyPhase::PostHerdImmunity));

        let d = pol.decide(&input(4.0, 0.9, 0.5)).unwrap();
        assert_eq!((d.u, d.phase), (0.03, PolicyPhase::PostHerdImmunity));
    }

    #[test]
    fn herd_immunity_level() {
        assert!((p().herd_immunity_level(0.03) - 0.39375).abs() < 1e-15);
    }

    #[test]
    fn infeasible_threshold_crossing_is_flagged_and_clamped() {
        let p = EpidemicParams::new(0.3, 0.033).unwrap();
        let mut pol = OptimalPolicy::new(p, c()).unwrap();
        let d = pol.decide(&input(5.0, 0.9, 0.02)).unwrap();
        assert_eq!(d.u, 0.15);
        let ev = d.infeasibility.unwrap();
        assert!((ev.required - (0.27 - 0.033)).abs() < 1e-15);
        assert_eq!(ev.time, 5.0);
        // Only reported once, at entry.
        assert!(pol.decide(&input(6.0, 0.89, 0.02)).unwrap().infeasibility.is_none());
    }

    #[test]
    fn crossing_past_herd_immunity_goes_straight_to_post() {
        let mut pol = OptimalPolicy::new(p(), c()).unwrap();
        let d = pol.decide(&input(0.0, 0.3, 0.01)).unwrap();
        assert_eq!((d.u, d.phase), (0.03, PolicyPhase::PostHerdImmunity));
    }

    #[test]
    fn naive_without_estimate_applies_ceiling() {
        let mut pol = NaivePolicy::new(c()).unwrap();
        let mut inp = input(0.0, 0.9, 0.02);
        inp.params = None;
        assert_eq!(pol.decide(&inp).unwrap().u, 0.15);
    }

    #[test]
    fn robust_needs_envelope() {
        let mut pol = RobustPolicy::new(c()).unwrap();
        let mut inp = input(0.0, 0.9, 0.02);
        inp.envelope = None;
        assert!(pol.decide(&inp).is_err());
    }

    #[test]
    fn robust_uses_worst_case_corner() {
        let mut pol = RobustPolicy::new(c()).unwrap();
        let env = EnvelopeSlice {
            time: 0.0,
            beta: Interval::new(0.15, 0.168).unwrap(),
            gamma: Interval::new(0.03135, 0.04).unwrap(),
            s: Interval::new(0.6, 0.63).unwrap(),
            i: Interval::new(0.009, 0.0101).unwrap(),
        };
        let mut inp = input(0.0, 0.6, 0.0095);
        inp.envelope = Some(env);
        let d = pol.decide(&inp).unwrap();
        assert_eq!(d.phase, PolicyPhase::Suppression);
        assert!((d.u - (0.168 * 0.63 - 0.03135)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_envelope_matches_optimal_decisions() {
        let mut opt = OptimalPolicy::new(p(), c()).unwrap();
        let mut rob = RobustPolicy::new(c()).unwrap();
        let mut nai = NaivePolicy::new(c()).unwrap();
        let path = [(0.99, 0.001), (0.9, 0.01), (0.7, 0.01), (0.5, 0.01), (0.39, 0.01), (0.38, 0.009)];
        for (k, &(s, i)) in path.iter().enumerate() {
            let inp = input(k as f64, s, i);
            let a = opt.decide(&inp).unwrap();
            assert_eq!(a, rob.decide(&inp).unwrap());
            assert_eq!(a, nai.decide(&inp).unwrap());
        }
    }

    #[test]
    fn phase_names_round_trip() {
        for ph in PolicyPhase::ALL {
            assert_eq!(PolicyPhase::parse(ph.as_str()), Some(ph));
        }
        assert!(PolicyPhase::parse("bogus").is_none());
    }
}
