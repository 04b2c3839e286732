//! Experiment orchestration: configuration, multi-seed runs, regret traces,
//! and reports.

mod analysis;
mod config;
mod experiment;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use analysis::{episode_bound, evaluate_bound, fit_regret_exponent, BoundInputs, SlopeFit};
pub use config::{parse_seeds, ExperimentConfig};
pub use experiment::{
    reference_optimum, run_experiment, run_seed, ExperimentResult, ReferenceOptimum, SeedSummary, SeedTrace,
    TraceEvent, TraceRow, REFERENCE_DIAMETER_PRECISION, REFERENCE_GAIN_PRECISION,
};
pub use report::{
    aggregate, emit_report, format_seed_csv, read_seed_csv, regret_curve, report_from_dir, seed_csv_name,
    summarize_rows, write_seed_csv, AggregateSummary, CurvePoint, TRACE_HEADER,
};

use crate::agent::AgentError;
use crate::benchmarks::BenchmarkError;
use crate::interaction::InteractionError;
use crate::mdp::MdpError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("benchmark has no Markov model to measure regret against")]
    NoMarkovModel,
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("seed {seed}: {source}")]
    Agent {
        seed: u64,
        #[source]
        source: AgentError,
    },
    #[error("seed {seed}: {source}")]
    Environment {
        seed: u64,
        #[source]
        source: InteractionError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed trace {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("no traces to report")]
    EmptyTraces,
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
    #[error("bound requires T >= S*A ({t} < {sa})")]
    HorizonTooShort { t: u64, sa: u64 },
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
