use proptest::prelude::*;
use sircontrol::harness::{compare, run_strategy, ParamsSource, ScenarioConfig, StrategyKind};
use sircontrol::policy::PolicyPhase;

fn noiseless(source: ParamsSource, inflation: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::reference().without_noise();
    cfg.estimation.params_source = source;
    cfg.estimation.inflation = inflation;
    cfg
}

#[test]
fn degenerate_envelope_reproduces_optimal() {
    let cfg = noiseless(ParamsSource::Truth, 0.0);
    let star = run_strategy(&cfg, StrategyKind::Optimal).unwrap();
    let hat = run_strategy(&cfg, StrategyKind::Robust).unwrap();
    assert_eq!(hat.record, star.record);
}

#[test]
fn naive_with_true_inputs_reproduces_optimal() {
    let cfg = noiseless(ParamsSource::Truth, 0.0);
    let star = run_strategy(&cfg, StrategyKind::Optimal).unwrap();
    let naive = run_strategy(&cfg, StrategyKind::Naive).unwrap();
    assert_eq!(naive.record, star.record);
}

#[test]
fn one_interval_delay_overshoot_scales_with_interval() {
    // True rates and states, but every observation is one policy interval old.
    let overshoot = |interval: f64| {
        let mut cfg = noiseless(ParamsSource::Truth, 0.0);
        cfg.policy_interval = interval;
        cfg.estimation.delay = 1;
        let o = run_strategy(&cfg, StrategyKind::Naive).unwrap();
        o.max_infected - cfg.constraints.i_bar
    };
    let (a, b, c) = (overshoot(0.25), overshoot(0.5), overshoot(1.0));
    assert!(a > 0.0 && a < b && b < c, "{a} {b} {c}");
    // I grows at about 0.097 per day near the threshold, so two intervals of
    // lag cost at most about 0.2 * interval * I_bar.
    for (d, x) in [(0.25, a), (0.5, b), (1.0, c)] {
        assert!(x <= 0.25 * d * 0.01, "interval {d}: overshoot {x}");
    }
}

#[test]
fn robust_worst_case_rate_at_outbreak() {
    let cfg = noiseless(ParamsSource::Truth, 0.05);
    let o = run_strategy(&cfg, StrategyKind::Robust).unwrap();
    let t_b = o.record.t_b.unwrap();
    let k = o.record.index_of(t_b).unwrap();
    // State intervals are clipped to [0, 1], which binds here.
    let s_max = (1.05 * o.record.states[k].s).min(1.0);
    assert_eq!(s_max, 1.0);
    let expected = 1.05 * 0.16 * s_max - 0.95 * 0.033;
    assert!((o.record.controls[k] - expected).abs() < 1e-12, "{} vs {expected}", o.record.controls[k]);
    assert_eq!(o.record.phases[k], PolicyPhase::Suppression);
    assert_eq!(t_b, 71.0);
}

#[test]
fn robust_is_safe_at_continuous_cadence() {
    let mut cfg = noiseless(ParamsSource::Truth, 0.05);
    cfg.ode_step = 0.01;
    cfg.policy_interval = 0.01;
    let o = run_strategy(&cfg, StrategyKind::Robust).unwrap();
    assert!(o.max_infected <= cfg.constraints.i_bar + 1e-6, "{}", o.max_infected);
}

#[test]
fn naive_underestimates_at_outbreak() {
    // Under 55 dB noise the naive run applies less than the optimal rate early
    // in suppression and overshoots the threshold.
    let base = ScenarioConfig::reference();
    let star = run_strategy(&base, StrategyKind::Optimal).unwrap();
    let mut below = 0;
    let mut days = 0;
    for seed in 0..20 {
        let cfg = base.clone().with_seed(seed);
        let naive = run_strategy(&cfg, StrategyKind::Naive).unwrap();
        assert!(naive.max_infected > cfg.constraints.i_bar, "seed {seed}");
        let t_b = naive.record.t_b.unwrap();
        for (t, _, u, phase) in naive.record.query_samples() {
            if phase == PolicyPhase::Suppression && t < t_b + 14.0 {
                let k = star.record.index_of(t).unwrap();
                days += 1;
                below += (u < star.record.controls[k]) as usize;
            }
        }
    }
    assert!(2 * below > days, "{below} of {days} days below the optimal rate");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covering_envelope_dominates_optimal(
        beta in 0.12f64..0.3,
        gamma in 0.02f64..0.06,
        inflation in 0.0f64..0.2,
        interval_steps in prop::sample::select(vec![1usize, 10, 50, 100]),
    ) {
        let mut cfg = noiseless(ParamsSource::Truth, inflation);
        cfg.params.beta = beta;
        cfg.params.gamma = gamma;
        cfg.constraints.u_max = 0.5;
        cfg.policy_interval = 0.01 * interval_steps as f64;
        let star = run_strategy(&cfg, StrategyKind::Optimal).unwrap();
        let hat = run_strategy(&cfg, StrategyKind::Robust).unwrap();
        let d = compare(&hat.record, &star.record, StrategyKind::Robust);
        prop_assert!(d.all_hold(), "{d:?}");
    }

    #[test]
    fn noisy_runs_clamp_and_never_regress(seed in 0u64..10_000, window in 2usize..30, smoothing in 1usize..4) {
        let mut cfg = ScenarioConfig::reference().with_seed(seed);
        cfg.horizon = 300.0;
        cfg.estimation.window = window;
        cfg.estimation.smoothing = smoothing;
        for kind in [StrategyKind::Naive, StrategyKind::Robust] {
            let o = run_strategy(&cfg, kind).unwrap();
            let c = cfg.constraints;
            prop_assert!(o.record.controls.iter().all(|&u| u >= c.u_min && u <= c.u_max));
            prop_assert!(o.record.phases.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
