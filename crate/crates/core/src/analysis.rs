//! Closed-form and trajectory analytics: peak infection under a constant
//! floor rate, feasibility pre-flight, testing cost, the robust-vs-optimal
//! cost gap, and cumulative infections.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlConstraints, EpidemicParams, SimulationRecord, SirState};
use crate::error::{Error, Result};
use crate::policy::PolicyPhase;

/// Peak of `I` reached under a constant rate `u_floor` from `(s_a, i_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPrediction {
    /// `(gamma + u_floor) / beta`.
    pub rho: f64,
    pub i_peak: f64,
    /// Equal to `rho` when a future peak exists, otherwise `s_a`.
    pub s_at_peak: f64,
    /// False when `s_a <= rho`: infections are already non-increasing.
    pub future_peak: bool,
}

fn check_start(s_a: f64, i_a: f64) -> Result<()> {
    if !(s_a > 0.0 && s_a <= 1.0) {
        return Err(Error::Domain(format!("susceptible fraction must lie in (0, 1], got {s_a}")));
    }
    if !(0.0..=1.0).contains(&i_a) || s_a + i_a > 1.0 + 1e-9 {
        return Err(Error::Domain(format!("invalid infected fraction {i_a} for S = {s_a}")));
    }
    Ok(())
}

/// `I` on the orbit through `(s_a, i_a)` under a constant rate, as a
/// function of `S`: `rho ln S - S - rho ln s_a + s_a + i_a`.
pub fn infected_on_orbit(rho: f64, s_a: f64, i_a: f64, s: f64) -> f64 {
    rho * (s / s_a).ln() - s + s_a + i_a
}

pub fn peak_infection(params: &EpidemicParams, u_floor: f64, s_a: f64, i_a: f64) -> Result<PeakPrediction> {
    check_start(s_a, i_a)?;
    params.validate()?;
    let rho = params.herd_immunity_level(u_floor);
    if s_a <= rho {
        return Ok(PeakPrediction {
            rho,
            i_peak: i_a,
            s_at_peak: s_a,
            future_peak: false,
        });
    }
    Ok(PeakPrediction {
        rho,
        i_peak: rho * (rho.ln() - 1.0 - s_a.ln()) + s_a + i_a,
        s_at_peak: rho,
        future_peak: true,
    })
}

/// Whether holding `u_min` forever keeps infections under the threshold,
/// which makes the constant floor the optimal policy.
pub fn check_strategy1_optimal(
    params: &EpidemicParams,
    constraints: &ControlConstraints,
    s_0: f64,
    i_0: f64,
) -> Result<bool> {
    Ok(peak_infection(params, constraints.u_min, s_0, i_0)?.i_peak <= constraints.i_bar)
}

/// `beta s - gamma`: the rate at which `I` stops changing. May be negative.
pub fn required_control(params: &EpidemicParams, s: f64) -> f64 {
    params.beta * s - params.gamma
}

/// Susceptible level at which the floor-rate trajectory first reaches the
/// threshold, or `None` if it never does.
pub fn outbreak_susceptible(
    params: &EpidemicParams,
    u_floor: f64,
    s_0: f64,
    i_0: f64,
    i_bar: f64,
) -> Result<Option<f64>> {
    let peak = peak_infection(params, u_floor, s_0, i_0)?;
    if i_0 >= i_bar {
        return Ok(Some(s_0));
    }
    if peak.i_peak < i_bar {
        return Ok(None);
    }
    // On (rho, s_0] the orbit is strictly decreasing in S.
    let f = |s: f64| infected_on_orbit(peak.rho, s_0, i_0, s) - i_bar;
    let (mut lo, mut hi) = (peak.rho, s_0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Pre-simulation verdicts for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preflight {
    pub peak: PeakPrediction,
    /// Holding `u_min` is optimal.
    pub strategy1_optimal: bool,
    /// Susceptible level when the threshold is first reached under `u_min`.
    pub outbreak_susceptible: Option<f64>,
    /// `beta S(t_b) - gamma` at that level.
    pub required_at_outbreak: Option<f64>,
    /// The required rate fits under `u_max` (or no outbreak occurs).
    pub feasible: bool,
}

pub fn preflight(
    params: &EpidemicParams,
    constraints: &ControlConstraints,
    initial: &SirState,
) -> Result<Preflight> {
    let peak = peak_infection(params, constraints.u_min, initial.s, initial.i)?;
    let s_b = outbreak_susceptible(params, constraints.u_min, initial.s, initial.i, constraints.i_bar)?;
    let required = s_b.map(|s| required_control(params, s));
    Ok(Preflight {
        peak,
        strategy1_optimal: peak.i_peak <= constraints.i_bar,
        outbreak_susceptible: s_b,
        required_at_outbreak: required,
        feasible: required.is_none_or(|u| u <= constraints.u_max),
    })
}

/// Total testing cost of a run, split by policy phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total_cost: f64,
    /// Indexed by [`PolicyPhase::index`].
    pub per_phase_cost: [f64; 3],
    pub gap_vs_optimal: Option<f64>,
}

/// Integral of the applied rate over the run.
///
/// Controls are held constant between samples, so summing `u_k (t_{k+1} - t_k)`
/// is the exact integral of what the integrator applied.
pub fn total_cost(record: &SimulationRecord) -> Result<CostReport> {
    if record.is_empty() {
        return Err(Error::Domain("empty record".into()));
    }
    let mut per_phase = [0.0; 3];
    for k in 0..record.len() - 1 {
        let dt = record.times[k + 1] - record.times[k];
        per_phase[record.phases[k].index()] += record.controls[k] * dt;
    }
    Ok(CostReport {
        total_cost: per_phase.iter().sum(),
        per_phase_cost: per_phase,
        gap_vs_optimal: None,
    })
}

/// Integral of the applied rate over `[a, b]` (clipped to the record span).
pub fn cost_between(record: &SimulationRecord, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..record.len().saturating_sub(1) {
        let lo = record.times[k].max(a);
        let hi = record.times[k + 1].min(b);
        if hi > lo {
            total += record.controls[k] * (hi - lo);
        }
    }
    total
}

/// Pieces of the cost-gap expression and the interval they cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTerms {
    pub t_start: f64,
    pub t_end: f64,
    /// `integral of beta (S - S*)` over the interval.
    pub susceptible_term: f64,
    /// `ln I*(t_end) - ln I(t_end)`.
    pub log_term: f64,
    pub value: f64,
}

/// Evaluate the extra-cost expression
/// `int_{t_b}^{t_h} beta (S - S*) dt - ln I(t_h) + ln I*(t_h)`
/// between a run (`record_hat`) and the optimal run (`record_star`).
///
/// The limits are the suppression entry and exit times of `record_hat`. When
/// `record_hat` never leaves suppression, the upper limit is the last time
/// both records share.
pub fn gap_terms(
    record_hat: &SimulationRecord,
    record_star: &SimulationRecord,
    params: &EpidemicParams,
) -> Result<GapTerms> {
    if record_hat.step != record_star.step || record_hat.start() != record_star.start() {
        return Err(Error::GridMismatch(format!(
            "steps {} vs {}",
            record_hat.step, record_star.step
        )));
    }
    let t_start = record_hat
        .t_b
        .ok_or_else(|| Error::Domain("record never entered suppression".into()))?;
    let common_end = record_hat.end().min(record_star.end());
    let t_end = record_hat.t_h.unwrap_or(common_end);
    if t_end > common_end {
        return Err(Error::OutOfRange {
            time: t_end,
            start: record_star.start(),
            end: common_end,
        });
    }
    let locate = |r: &SimulationRecord, t: f64| {
        r.index_of(t)
            .ok_or_else(|| Error::GridMismatch(format!("no sample at t = {t}")))
    };
    let (kb, kh) = (locate(record_hat, t_start)?, locate(record_hat, t_end)?);
    if locate(record_star, t_start)? != kb || locate(record_star, t_end)? != kh {
        return Err(Error::GridMismatch("sample indices differ between records".into()));
    }
    for k in [kb, kh] {
        if record_hat.times[k] != record_star.times[k] {
            return Err(Error::GridMismatch(format!("sample {k} at different times")));
        }
    }

    let diff = |k: usize| params.beta * (record_hat.states[k].s - record_star.states[k].s);
    let mut integral = 0.0;
    for k in kb..kh {
        let dt = record_hat.times[k + 1] - record_hat.times[k];
        integral += 0.5 * (diff(k) + diff(k + 1)) * dt;
    }

    let (i_hat, i_star) = (record_hat.states[kh].i, record_star.states[kh].i);
    if !(i_hat > 0.0 && i_star > 0.0) {
        return Err(Error::Domain(format!(
            "infections must be positive at t = {t_end}: {i_hat}, {i_star}"
        )));
    }
    let log_term = i_star.ln() - i_hat.ln();
    Ok(GapTerms {
        t_start,
        t_end,
        susceptible_term: integral,
        log_term,
        value: integral + log_term,
    })
}

pub fn gap_formula(
    record_hat: &SimulationRecord,
    record_star: &SimulationRecord,
    params: &EpidemicParams,
) -> Result<f64> {
    gap_terms(record_hat, record_star, params).map(|g| g.value)
}

/// `I(t) + R(t)`, linearly interpolated.
pub fn cumulative_infected(record: &SimulationRecord, t: f64) -> Result<f64> {
    record.state_at(t).map(|s| s.cumulative_infected())
}

/// Costs per phase as `(phase, cost)` pairs, for reporting.
pub fn phase_costs(report: &CostReport) -> impl Iterator<Item = (PolicyPhase, f64)> + '_ {
    PolicyPhase::ALL.into_iter().map(|p| (p, report.per_phase_cost[p.index()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> EpidemicParams {
        EpidemicParams::new(0.16, 0.033).unwrap()
    }

    #[test]
    fn reference_peak() {
        // Oracle: independent float evaluation and scipy solve_ivp (rtol 1e-12)
        // both give 0.2392635463.
        let pk = peak_infection(&p(), 0.03, 0.99999, 1e-5).unwrap();
        assert!((pk.rho - 0.39375).abs() < 1e-15);
        assert!((pk.i_peak - 0.239263546288).abs() < 1e-11);
        assert!(pk.future_peak);
        assert_eq!(pk.s_at_peak, pk.rho);
    }

    #[test]
    fn peak_at_rho_is_current_value() {
        let rho = 0.39375;
        let pk = peak_infection(&p(), 0.03, rho, 0.02).unwrap();
        assert_eq!(pk.i_peak, 0.02);
        assert!(!pk.future_peak);
        let pk = peak_infection(&p(), 0.03, 0.3, 0.02).unwrap();
        assert_eq!(pk.i_peak, 0.02);
    }

    #[test]
    fn peak_domain_errors() {
        assert!(matches!(peak_infection(&p(), 0.03, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(peak_infection(&p(), 0.03, -0.1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(peak_infection(&p(), 0.03, 0.8, 0.3), Err(Error::Domain(_))));
    }

    #[test]
    fn higher_floor_lowers_peak() {
        let a = peak_infection(&p(), 0.03, 0.99, 0.01).unwrap().i_peak;
        let b = peak_infection(&p(), 0.05, 0.99, 0.01).unwrap().i_peak;
        assert!(b < a);
    }

    #[test]
    fn strategy1_checks() {
        let c = ControlConstraints::new(0.03, 0.15, 0.01).unwrap();
        assert!(!check_strategy1_optimal(&p(), &c, 0.99999, 1e-5).unwrap());
        let c1 = ControlConstraints::new(0.03, 0.15, 1.0).unwrap();
        assert!(check_strategy1_optimal(&p(), &c1, 0.99999, 1e-5).unwrap());
        assert!(check_strategy1_optimal(&p(), &c, 0.3, 0.01).unwrap());
    }

    #[test]
    fn required_control_values() {
        assert!((required_control(&p(), 0.6) - 0.063).abs() < 1e-15);
        assert!(required_control(&p(), 0.033 / 0.16).abs() < 1e-15);
        let at_start = required_control(&p(), 1.0);
        assert!((at_start - 0.127).abs() < 1e-15 && at_start <= 0.15);
    }

    #[test]
    fn outbreak_level_matches_ode_event() {
        // Oracle: scipy event location S(t_b) = 0.983421395141.
        let s_b = outbreak_susceptible(&p(), 0.03, 0.99999, 1e-5, 0.01).unwrap().unwrap();
        assert!((s_b - 0.983421395141).abs() < 1e-11);
        assert_eq!(outbreak_susceptible(&p(), 0.03, 0.99999, 1e-5, 0.5).unwrap(), None);
        assert_eq!(outbreak_susceptible(&p(), 0.03, 0.9, 0.02, 0.01).unwrap(), Some(0.9));
    }

    #[test]
    fn preflight_reference() {
        let c = ControlConstraints::new(0.03, 0.15, 0.01).unwrap();
        let pf = preflight(&p(), &c, &SirState::with_infected(1e-5).unwrap()).unwrap();
        assert!(!pf.strategy1_optimal);
        assert!(pf.feasible);
        assert!((pf.required_at_outbreak.unwrap() - 0.124347423223).abs() < 1e-10);
        let tight = ControlConstraints::new(0.03, 0.1, 0.01).unwrap();
        assert!(!preflight(&p(), &tight, &SirState::with_infected(1e-5).unwrap()).unwrap().feasible);
    }
}
