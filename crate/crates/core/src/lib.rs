//! Optimistic model selection for average-reward reinforcement learning.
//!
//! The agent is handed a finite set of candidate state representations (maps
//! from interaction histories to finite state sets), only some of which make
//! the environment Markov. It learns while choosing among them, using
//! extended value iteration for optimism within each model, a span-based
//! penalty across models, and a reward test that eliminates models whose
//! optimistic promise is not met.
//!
//! Modules:
//! - [`interaction`]: observations, actions, histories, representation models.
//! - [`statistics`]: visit counts, empirical estimates, confidence widths.
//! - [`evi`]: extended value iteration.
//! - [`agent`]: model selection, runs, episodes, elimination.
//! - [`mdp`], [`oracles`], [`benchmarks`]: known MDPs, exact oracles, environments.
//! - [`harness`]: experiments, regret traces, reports.
//! - [`acceptance`]: the acceptance checks shared by the CLI and the test suite.

pub mod acceptance;
pub mod agent;
pub mod benchmarks;
pub mod evi;
pub mod harness;
pub mod interaction;
pub mod mdp;
pub mod oracles;
pub mod statistics;

pub use agent::{AgentConfig, ControlDecision, EpisodeEnd, OmsAgent, StepRecord};
pub use benchmarks::{build_benchmark, Benchmark, BenchmarkFamily, BenchmarkSpec};
pub use evi::{extended_value_iteration, inner_max_transition, span, OptimisticProblem, OptimisticSolution};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult, SeedTrace};
pub use interaction::{Action, Environment, GlobalStateId, History, Observation, RepresentationModel};
pub use mdp::TabularMdp;
pub use statistics::{confidence_widths, ConfidenceWidths, SufficientStatistics};
