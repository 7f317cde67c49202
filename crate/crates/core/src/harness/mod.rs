//! Scenario runner: simulate several strategies from one configuration and
//! compare them against the optimal policy.

pub mod config;
pub mod export;
pub mod pipeline;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CostReport, GapTerms};
use crate::dynamics::{integrate, EpidemicParams, SimulationRecord, SirState};
use crate::error::{Error, Result};
use crate::estimation::{ParamEstimate, UncertaintyEnvelope};
use crate::policy::{ConstantPolicy, NaivePolicy, OptimalPolicy, Policy, RobustPolicy};

pub use config::{EstimationConfig, NoiseConfig, ScenarioConfig, StrategyKind};
pub use pipeline::{ClosedLoop, InformationPipeline, InformationSettings, ParamsSource};

/// Slack on `I <= I_bar` before a run counts as violating the threshold.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Relative overshoot accepted as "nearly feasible" under a held control.
pub const NEAR_FEASIBLE_FACTOR: f64 = 1.02;
/// Tolerance for the pointwise control comparison.
pub const CONTROL_TOL: f64 = 1e-9;
/// Tolerance for state and cost orderings.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    NearlyFeasible,
    Infeasible,
}

impl Verdict {
    pub fn classify(max_infected: f64, i_bar: f64) -> Self {
        if max_infected <= i_bar + FEASIBILITY_TOL {
            Verdict::Feasible
        } else if max_infected <= NEAR_FEASIBLE_FACTOR * i_bar {
            Verdict::NearlyFeasible
        } else {
            Verdict::Infeasible
        }
    }
}

/// One simulated strategy.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub kind: StrategyKind,
    pub record: SimulationRecord,
    pub cost: CostReport,
    pub max_infected: f64,
    pub peak_time: f64,
    pub verdict: Verdict,
    /// Estimates available at each query (empty entries before the first full window).
    pub estimates: Vec<Option<ParamEstimate>>,
    pub envelope: UncertaintyEnvelope,
    /// True state at each query, aligned with `envelope`.
    pub truth: Vec<(f64, SirState)>,
}

impl StrategyOutcome {
    /// Fraction of queries whose envelope slice holds the true rates and state.
    pub fn coverage(&self, params: &EpidemicParams) -> f64 {
        if self.envelope.is_empty() {
            return 1.0;
        }
        let hits = self
            .envelope
            .slices
            .iter()
            .zip(&self.truth)
            .filter(|(slice, (_, st))| slice.covers(params.beta, params.gamma, st))
            .count();
        hits as f64 / self.envelope.len() as f64
    }
}

/// Orderings of one strategy against the optimal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceChecks {
    pub strategy: StrategyKind,
    /// `u(t) >= u*(t) - 1e-9` at every shared sample.
    pub control_dominates: bool,
    /// Smallest `u(t) - u*(t)` over shared samples.
    pub min_control_margin: f64,
    /// Suppression starts no later than the optimal one.
    pub earlier_outbreak: bool,
    /// Suppression ends no earlier than the optimal one (never ending counts as later).
    pub later_herd_immunity: bool,
    /// Cost over the shared span is at least the optimal cost.
    pub cost_ordered: bool,
    pub shared_span_end: f64,
    pub cost_difference: f64,
    /// `S(t) >= S*(t)` for sampled `t <= t_h*`.
    pub susceptible_dominates: bool,
    /// `I + R <= I* + R*` for sampled `t <= t_h*`.
    pub cumulative_ordered: bool,
    /// Upper end of the state comparisons: `t_h*`, or the shared span when absent.
    pub checked_until: f64,
}

impl DominanceChecks {
    pub fn all_hold(&self) -> bool {
        self.control_dominates
            && self.earlier_outbreak
            && self.later_herd_immunity
            && self.cost_ordered
            && self.susceptible_dominates
            && self.cumulative_ordered
    }
}

/// Gap expression next to the directly integrated cost difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub strategy: StrategyKind,
    pub terms: GapTerms,
    /// `J(u) - J(u*)` restricted to `[terms.t_start, terms.t_end]`.
    pub cost_difference: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub config: ScenarioConfig,
    /// In the order listed by the configuration.
    pub outcomes: Vec<StrategyOutcome>,
    pub dominance: Vec<DominanceChecks>,
    pub gaps: Vec<GapCheck>,
    /// Gap expressions that could not be evaluated, with the reason.
    pub gap_failures: Vec<(StrategyKind, String)>,
}

impl ComparisonReport {
    pub fn outcome(&self, kind: StrategyKind) -> Option<&StrategyOutcome> {
        self.outcomes.iter().find(|o| o.kind == kind)
    }

    pub fn dominance_for(&self, kind: StrategyKind) -> Option<&DominanceChecks> {
        self.dominance.iter().find(|d| d.strategy == kind)
    }

    pub fn gap_for(&self, kind: StrategyKind) -> Option<&GapCheck> {
        self.gaps.iter().find(|g| g.strategy == kind)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary::from(self)
    }
}

fn make_policy(kind: StrategyKind, cfg: &ScenarioConfig) -> Result<Box<dyn Policy>> {
    let c = cfg.constraints;
    Ok(match kind {
        StrategyKind::Constant => Box::new(ConstantPolicy::new(cfg.constant_rate.unwrap_or(c.u_min), c)?),
        StrategyKind::Optimal => Box::new(OptimalPolicy::new(cfg.params, c)?),
        StrategyKind::Naive => Box::new(NaivePolicy::new(c)?),
        StrategyKind::Robust => Box::new(RobustPolicy::new(c)?),
    })
}

/// Simulate one strategy of a scenario.
pub fn run_strategy(cfg: &ScenarioConfig, kind: StrategyKind) -> Result<StrategyOutcome> {
    let info = match kind {
        StrategyKind::Constant | StrategyKind::Optimal => InformationPipeline::perfect(cfg.params),
        StrategyKind::Naive | StrategyKind::Robust => InformationPipeline::new(cfg.params, cfg.information())?,
    };
    let mut controller = ClosedLoop::new(make_policy(kind, cfg)?, info);
    let record = integrate(&cfg.initial, &cfg.params, &mut controller, &cfg.integration())?;
    let info = controller.into_info();
    let cost = analysis::total_cost(&record)?;
    let (max_infected, peak_time) = record.peak_infected();
    Ok(StrategyOutcome {
        kind,
        verdict: Verdict::classify(max_infected, cfg.constraints.i_bar),
        cost,
        max_infected,
        peak_time,
        estimates: info.estimates().to_vec(),
        envelope: info.envelope(),
        truth: info.truth().to_vec(),
        record,
    })
}

/// Simulate every configured strategy (in parallel) and compare each against
/// the optimal run when one is requested.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let mut outcomes = cfg
        .strategies
        .par_iter()
        .map(|&k| run_strategy(cfg, k))
        .collect::<Result<Vec<_>>>()?;

    let mut dominance = Vec::new();
    let mut gaps = Vec::new();
    let mut gap_failures = Vec::new();
    if let Some(star) = outcomes.iter().find(|o| o.kind == StrategyKind::Optimal) {
        for hat in outcomes.iter().filter(|o| o.kind != StrategyKind::Optimal) {
            dominance.push(compare(&hat.record, &star.record, hat.kind));
            match gap_check(&hat.record, &star.record, &cfg.params, hat.kind) {
                Ok(g) => gaps.push(g),
                Err(e) => gap_failures.push((hat.kind, e.to_string())),
            }
        }
    }
    for o in &mut outcomes {
        if let Some(g) = gaps.iter().find(|g| g.strategy == o.kind) {
            o.cost.gap_vs_optimal = Some(g.terms.value);
        }
    }
    Ok(ComparisonReport {
        config: cfg.clone(),
        outcomes,
        dominance,
        gaps,
        gap_failures,
    })
}

/// Orderings of `hat` against `star`; both must share the sampling grid.
pub fn compare(hat: &SimulationRecord, star: &SimulationRecord, strategy: StrategyKind) -> DominanceChecks {
    let n = hat.len().min(star.len());
    let span_end = hat.times[n - 1];

    let mut min_margin = f64::INFINITY;
    // The last control of each record is never applied, so stop one short.
    for k in 0..n.saturating_sub(1) {
        min_margin = min_margin.min(hat.controls[k] - star.controls[k]);
    }
    if n < 2 {
        min_margin = 0.0;
    }

    let never = |t: Option<f64>| t.unwrap_or(f64::INFINITY);
    let earlier_outbreak = never(hat.t_b) <= never(star.t_b);
    let later_herd_immunity = never(hat.t_h) >= never(star.t_h);

    let j_hat = analysis::cost_between(hat, hat.start(), span_end);
    let j_star = analysis::cost_between(star, star.start(), span_end);

    let checked_until = star.t_h.map_or(span_end, |t| t.min(span_end));
    let mut s_dom = true;
    let mut cum_ord = true;
    for k in 0..n {
        if hat.times[k] > checked_until {
            break;
        }
        let (a, b) = (&hat.states[k], &star.states[k]);
        s_dom &= a.s >= b.s - ORDER_TOL;
        cum_ord &= a.cumulative_infected() <= b.cumulative_infected() + ORDER_TOL;
    }

    DominanceChecks {
        strategy,
        control_dominates: min_margin >= -CONTROL_TOL,
        min_control_margin: min_margin,
        earlier_outbreak,
        later_herd_immunity,
        cost_ordered: j_hat >= j_star - ORDER_TOL,
        shared_span_end: span_end,
        cost_difference: j_hat - j_star,
        susceptible_dominates: s_dom,
        cumulative_ordered: cum_ord,
        checked_until,
    }
}

/// Evaluate the gap expression and the integrated cost difference over the
/// same interval.
pub fn gap_check(
    hat: &SimulationRecord,
    star: &SimulationRecord,
    params: &EpidemicParams,
    strategy: StrategyKind,
) -> Result<GapCheck> {
    let terms = analysis::gap_terms(hat, star, params)?;
    let cost_difference = analysis::cost_between(hat, terms.t_start, terms.t_end)
        - analysis::cost_between(star, terms.t_start, terms.t_end);
    Ok(GapCheck {
        strategy,
        terms,
        cost_difference,
        error: (terms.value - cost_difference).abs(),
    })
}

/// Serializable digest of a [`ComparisonReport`] (no trajectories).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config: ScenarioConfig,
    pub strategies: Vec<StrategySummary>,
    pub dominance: Vec<DominanceChecks>,
    pub gaps: Vec<GapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub total_cost: f64,
    pub phase_costs: BTreeMap<String, f64>,
    pub t_b: Option<f64>,
    pub t_h: Option<f64>,
    pub threshold_crossing: Option<f64>,
    pub max_infected: f64,
    pub peak_time: f64,
    pub verdict: Verdict,
    pub infeasibility_events: usize,
    pub first_infeasibility: Option<f64>,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub strategy: StrategyKind,
    pub t_start: f64,
    pub t_end: f64,
    pub gap_formula: Option<f64>,
    pub cost_difference: Option<f64>,
    pub error: Option<f64>,
    pub note: Option<String>,
}

impl From<&ComparisonReport> for ReportSummary {
    fn from(r: &ComparisonReport) -> Self {
        let strategies = r
            .outcomes
            .iter()
            .map(|o| StrategySummary {
                strategy: o.kind,
                total_cost: o.cost.total_cost,
                phase_costs: analysis::phase_costs(&o.cost)
                    .map(|(p, c)| (p.as_str().to_string(), c))
                    .collect(),
                t_b: o.record.t_b,
                t_h: o.record.t_h,
                threshold_crossing: o.record.threshold_crossing,
                max_infected: o.max_infected,
                peak_time: o.peak_time,
                verdict: o.verdict,
                infeasibility_events: o.record.infeasibility.len(),
                first_infeasibility: o.record.infeasibility.first().map(|e| e.time),
                end_time: o.record.end(),
            })
            .collect();
        let mut gaps: Vec<GapSummary> = r
            .gaps
            .iter()
            .map(|g| GapSummary {
                strategy: g.strategy,
                t_start: g.terms.t_start,
                t_end: g.terms.t_end,
                gap_formula: Some(g.terms.value),
                cost_difference: Some(g.cost_difference),
                error: Some(g.error),
                note: None,
            })
            .collect();
        gaps.extend(r.gap_failures.iter().map(|(k, why)| GapSummary {
            strategy: *k,
            t_start: f64::NAN,
            t_end: f64::NAN,
            gap_formula: None,
            cost_difference: None,
            error: None,
            note: Some(why.clone()),
        }));
        ReportSummary {
            config: r.config.clone(),
            strategies,
            dominance: r.dominance.clone(),
            gaps,
        }
    }
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Gamma,
    UMin,
    I0,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "beta" => Some(Self::Beta),
            "gamma" => Some(Self::Gamma),
            "u_min" => Some(Self::UMin),
            "i0" => Some(Self::I0),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Gamma => "gamma",
            Self::UMin => "u_min",
            Self::I0 => "i0",
        }
    }

    /// Whether the uncontrolled peak should grow with this parameter.
    pub fn peak_increases(self) -> bool {
        matches!(self, Self::Beta | Self::I0)
    }

    fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> Result<()> {
        match self {
            Self::Beta => cfg.params.beta = value,
            Self::Gamma => cfg.params.gamma = value,
            Self::UMin => cfg.constraints.u_min = value,
            Self::I0 => cfg.initial = SirState::with_infected(value)?,
        }
        cfg.params.validate()?;
        cfg.constraints.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub rho: f64,
    pub formula_peak: f64,
    /// Peak of a run held at the floor rate.
    pub simulated_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Every adjacent pair of formula peaks moves in the expected direction.
    pub monotone: bool,
}

/// Vary one parameter and compare the closed-form peak under the floor rate
/// with a simulated constant-rate run. `values` must be strictly increasing.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("sweep values must be strictly increasing"));
    }
    let rows = values
        .par_iter()
        .map(|&v| {
            let mut c = cfg.clone();
            param.apply(&mut c, v)?;
            let pk = analysis::peak_infection(&c.params, c.constraints.u_min, c.initial.s, c.initial.i)?;
            let policy = ConstantPolicy::new(c.constraints.u_min, c.constraints)?;
            let mut ctl = ClosedLoop::perfect(policy, c.params);
            let rec = integrate(&c.initial, &c.params, &mut ctl, &c.integration())?;
            Ok(SweepRow {
                value: v,
                rho: pk.rho,
                formula_peak: pk.i_peak,
                simulated_peak: rec.max_infected(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let up = param.peak_increases();
    let monotone = rows.windows(2).all(|w| {
        let (a, b) = (w[0].formula_peak, w[1].formula_peak);
        if up {
            b > a
        } else {
            b < a
        }
    });
    Ok(SweepReport { param, rows, monotone })
}

/// Per-seed verdicts from [`monte_carlo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub max_infected: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
}

/// Run the scenario once per seed, in parallel, keeping only the peak and verdict.
pub fn monte_carlo(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<SeedResult>> {
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let c = cfg.clone().with_seed(seed);
            let mut max_infected = BTreeMap::new();
            let mut verdicts = BTreeMap::new();
            for &k in &c.strategies {
                let o = run_strategy(&c, k)?;
                max_infected.insert(k.to_string(), o.max_infected);
                verdicts.insert(k.to_string(), o.verdict);
            }
            Ok(SeedResult {
                seed,
                max_infected,
                verdicts,
            })
        })
        .collect()
}
