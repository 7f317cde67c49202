use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sircontrol::analysis::preflight;
use sircontrol::harness::export::export;
use sircontrol::harness::{sweep, ReportSummary, SweepParam};
use sircontrol::{run_scenario, Error, ScenarioConfig};

/// Simulate testing-for-isolation policies on an SIR epidemic.
#[derive(Debug, Parser)]
#[command(name = "sircontrol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every strategy in a scenario and export trajectories and a summary.
    Run {
        config: PathBuf,
        /// Output directory (created if missing, files overwritten).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Drop measurement noise.
        #[arg(long)]
        no_noise: bool,
    },
    /// Vary one parameter and compare the closed-form peak with simulation.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        /// Strictly increasing, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Validate a scenario and print the pre-flight verdicts without simulating.
    Check { config: PathBuf },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    SweepParam::parse(s).ok_or_else(|| format!("unknown parameter `{s}` (expected beta, gamma, u_min or i0)"))
}

/// Exit code 1 for anything wrong with the inputs, 2 for failures while running.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

/// An unreadable file is a configuration problem too.
fn load(path: &PathBuf) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::from_path(path)
        .and_then(|cfg| cfg.validate().map(|()| cfg))
        .map_err(Failure::Config)
}

fn print_summary(s: &ReportSummary) {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |t| format!("{t}"));
    println!(
        "{:<9} {:>10} {:>8} {:>8} {:>11} {:>9}  verdict",
        "strategy", "cost", "t_b", "t_h", "max I", "peak t"
    );
    for st in &s.strategies {
        println!(
            "{:<9} {:>10.4} {:>8} {:>8} {:>11.6} {:>9}  {:?}",
            st.strategy.as_str(),
            st.total_cost,
            opt(st.t_b),
            opt(st.t_h),
            st.max_infected,
            st.peak_time,
            st.verdict
        );
    }
    for d in &s.dominance {
        println!(
            "{} vs optimal: control {} | switch times {} {} | cost {} | cumulative infections {}",
            d.strategy,
            d.control_dominates,
            d.earlier_outbreak,
            d.later_herd_immunity,
            d.cost_ordered,
            d.cumulative_ordered
        );
    }
    for g in &s.gaps {
        match (g.gap_formula, g.cost_difference) {
            (Some(f), Some(c)) => println!(
                "{} gap on [{:.2}, {:.2}]: formula {f:.6}, cost difference {c:.6}",
                g.strategy, g.t_start, g.t_end
            ),
            _ => println!("{} gap: {}", g.strategy, g.note.as_deref().unwrap_or("unavailable")),
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            out,
            seed,
            no_noise,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg = cfg.with_seed(seed);
            }
            if no_noise {
                cfg = cfg.without_noise();
            }
            let report = run_scenario(&cfg)?;
            print_summary(&report.summary());
            let files = export(&report, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Sweep { config, param, values } => {
            let cfg = load(&config)?;
            let r = sweep(&cfg, param, &values)?;
            println!("{:>12} {:>10} {:>14} {:>14}", param.as_str(), "rho", "formula peak", "simulated");
            for row in &r.rows {
                println!(
                    "{:>12} {:>10.6} {:>14.8} {:>14.8}",
                    row.value, row.rho, row.formula_peak, row.simulated_peak
                );
            }
            let direction = if param.peak_increases() { "increasing" } else { "decreasing" };
            println!("peak strictly {direction} in {}: {}", param.as_str(), r.monotone);
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let p = preflight(&cfg.params, &cfg.constraints, &cfg.initial)?;
            println!("config ok: {}", config.display());
            println!("rho = (gamma + u_min) / beta = {:.6}", p.peak.rho);
            if p.peak.future_peak {
                println!("peak I under u_min = {:.6}", p.peak.i_peak);
            } else {
                println!("S0 <= rho: infections already falling (I0 = {})", p.peak.i_peak);
            }
            println!("holding u_min is optimal: {}", p.strategy1_optimal);
            match (p.outbreak_susceptible, p.required_at_outbreak) {
                (Some(s), Some(u)) => {
                    println!("threshold reached at S = {s:.6}, required rate {u:.6} (u_max {})", cfg.constraints.u_max)
                }
                _ => println!("threshold never reached under u_min"),
            }
            println!("feasible: {}", p.feasible);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Bad arguments count as configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
