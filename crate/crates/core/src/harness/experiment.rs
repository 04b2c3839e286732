use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{fit_regret_exponent, SlopeFit};
use super::config::ExperimentConfig;
use super::HarnessError;
use crate::agent::{AgentConfig, AgentCounters, ControlDecision, EpisodeEnd, OmsAgent};
use crate::benchmarks::{build_benchmark, Benchmark};
use crate::interaction::Environment;
use crate::oracles::{diameter, optimal_gain};

/// Precision of the reference optimal gain.
pub const REFERENCE_GAIN_PRECISION: f64 = 1e-8;
/// Precision of the hitting-time iteration behind the reference diameter.
pub const REFERENCE_DIAMETER_PRECISION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    None,
    RunEnd,
    EpisodeEndDoubling,
    EpisodeEndTestfail,
    PhiReset,
}

impl TraceEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceEvent::None => "none",
            TraceEvent::RunEnd => "run_end",
            TraceEvent::EpisodeEndDoubling => "episode_end_doubling",
            TraceEvent::EpisodeEndTestfail => "episode_end_testfail",
            TraceEvent::PhiReset => "phi_reset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => TraceEvent::None,
            "run_end" => TraceEvent::RunEnd,
            "episode_end_doubling" => TraceEvent::EpisodeEndDoubling,
            "episode_end_testfail" => TraceEvent::EpisodeEndTestfail,
            "phi_reset" => TraceEvent::PhiReset,
            _ => return None,
        })
    }

    pub fn ends_episode(&self) -> bool {
        matches!(
            self,
            TraceEvent::EpisodeEndDoubling | TraceEvent::EpisodeEndTestfail | TraceEvent::PhiReset
        )
    }

    pub fn eliminates(&self) -> bool {
        matches!(self, TraceEvent::EpisodeEndTestfail | TraceEvent::PhiReset)
    }
}

impl From<ControlDecision> for TraceEvent {
    fn from(d: ControlDecision) -> Self {
        match d {
            ControlDecision::ContinueRun => TraceEvent::None,
            ControlDecision::EndRunStartNextRun => TraceEvent::RunEnd,
            ControlDecision::EndEpisode(EpisodeEnd::VisitDoubling) => TraceEvent::EpisodeEndDoubling,
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed { reset: false, .. }) => TraceEvent::EpisodeEndTestfail,
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed { reset: true, .. }) => TraceEvent::PhiReset,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One CSV row: `t,k,j,model_id,s,a,r,cum_reward,regret,rho_kj,lob,test_margin,event`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub k: u64,
    pub j: u32,
    pub model_id: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub cum_reward: f64,
    pub regret: f64,
    pub rho_kj: f64,
    pub lob: f64,
    pub test_margin: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rho_star: f64,
    pub diameter_star: Option<f64>,
    #[serde(rename = "K_T")]
    pub k_t: u64,
    pub total_runs: u64,
    pub eliminations: BTreeMap<usize, u64>,
    pub final_regret: f64,
    pub slope_fit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedTrace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub summary: SeedSummary,
    pub counters: AgentCounters,
}

/// Best Markov model of a benchmark and its oracle quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptimum {
    pub model_id: usize,
    pub rho_star: f64,
    pub diameter: f64,
}

/// `phi*`: the Markov model with the largest optimal gain (lowest id on ties).
pub fn reference_optimum(benchmark: &Benchmark) -> Result<ReferenceOptimum, HarnessError> {
    let mut best: Option<(usize, f64)> = None;
    for id in benchmark.markov_models() {
        let mdp = benchmark.references[id].as_ref().expect("markov model has a reference");
        let gain = optimal_gain(mdp, REFERENCE_GAIN_PRECISION)?;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((id, gain));
        }
    }
    let (model_id, rho_star) = best.ok_or(HarnessError::NoMarkovModel)?;
    let mdp = benchmark.references[model_id].as_ref().expect("checked above");
    Ok(ReferenceOptimum {
        model_id,
        rho_star,
        diameter: diameter(mdp, REFERENCE_DIAMETER_PRECISION)?,
    })
}

/// Default fit window `[T/10, T]`.
pub(crate) fn default_window(horizon: u64) -> (u64, u64) {
    ((horizon / 10).max(1), horizon)
}

/// Runs the agent on one sampling seed and records its regret trace.
pub fn run_seed(
    benchmark: &Benchmark,
    reference: &ReferenceOptimum,
    delta: f64,
    horizon: u64,
    seed: u64,
    stride: u64,
) -> Result<SeedTrace, HarnessError> {
    let agent_err = |source| HarnessError::Agent { seed, source };
    let env_err = |source| HarnessError::Environment { seed, source };
    let mut env = benchmark.environment(seed);
    let mut agent = OmsAgent::new(AgentConfig {
        models: benchmark.models.clone(),
        delta,
        actions: benchmark.num_actions(),
    })
    .map_err(agent_err)?;
    let mut action = agent.start(env.reset()).map_err(agent_err)?;
    let mut rows = Vec::with_capacity((horizon / stride.max(1)) as usize + 64);
    let mut cum_reward = 0.0;
    let mut regret = 0.0;
    for _ in 0..horizon {
        let (reward, next) = env.step(action).map_err(env_err)?;
        let (record, next_action) = agent.observe(reward, next).map_err(agent_err)?;
        cum_reward += reward;
        regret = record.t as f64 * reference.rho_star - cum_reward;
        let event = TraceEvent::from(record.decision);
        if stride <= 1 || record.t % stride == 0 || event != TraceEvent::None || record.t == horizon {
            rows.push(TraceRow {
                t: record.t,
                k: record.k,
                j: record.j,
                model_id: record.model_id,
                s: record.s,
                a: record.a,
                r: record.r,
                cum_reward,
                regret,
                rho_kj: record.rho_kj,
                lob: record.lob,
                test_margin: record.test_margin,
                event,
            });
        }
        action = next_action;
    }
    let counters = agent.counters().clone();
    let slope_fit = fit_regret_exponent(rows.iter().map(|r| (r.t, r.regret)), default_window(horizon))
        .ok()
        .map(|f: SlopeFit| f.slope);
    let summary = SeedSummary {
        seed,
        rho_star: reference.rho_star,
        diameter_star: Some(reference.diameter),
        k_t: counters.episodes + 1,
        total_runs: counters.runs + 1,
        eliminations: counters.eliminations.iter().copied().enumerate().collect(),
        final_regret: regret,
        slope_fit,
    };
    Ok(SeedTrace {
        seed,
        rows,
        summary,
        counters,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reference: ReferenceOptimum,
    /// Sorted by seed.
    pub traces: Vec<SeedTrace>,
}

/// Runs every seed of `config` (in parallel) and returns the traces sorted
/// by seed. Nothing is written to disk; see [`super::emit_report`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let benchmark = build_benchmark(&config.benchmark)?;
    let reference = reference_optimum(&benchmark)?;
    let stride = config.stride();
    let job = || -> Result<Vec<SeedTrace>, HarnessError> {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(&benchmark, &reference, config.delta, config.horizon, seed, stride))
            .collect()
    };
    let mut traces = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(job)?,
        None => job()?,
    };
    traces.sort_by_key(|t| t.seed);
    Ok(ExperimentResult {
        config: config.clone(),
        reference,
        traces,
    })
}
