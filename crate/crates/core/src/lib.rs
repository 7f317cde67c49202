//! Testing-for-isolation control of SIR epidemics.
//!
//! The controlled model is
//!
//! ```text
//! dS/dt = -beta S I
//! dI/dt =  beta S I - (gamma + u) I
//! dR/dt = (gamma + u) I
//! ```
//!
//! with the testing rate `u` bounded in `[u_min, u_max]` and the infected
//! fraction required to stay below `i_bar`. The crate provides a fixed-step
//! integrator ([`dynamics`]), the optimal, naive and robust three-stage
//! policies ([`policy`]), closed-form analysis ([`analysis`]), noisy
//! observation and parameter estimation ([`estimation`]), and a scenario
//! runner with CSV/JSON export ([`harness`]).

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod policy;

pub use dynamics::{
    integrate, ControlConstraints, ControlDecision, Controller, EpidemicParams, IntegrationSettings,
    SimulationRecord, SirState,
};
pub use error::{Error, Result};
pub use harness::{run_scenario, ComparisonReport, ScenarioConfig, StrategyKind, Verdict};
pub use policy::{ConstantPolicy, NaivePolicy, OptimalPolicy, Policy, PolicyPhase, RobustPolicy};
