//! Python bindings for `oms-core`.
//!
//! ```python
//! import oms
//! bench = oms.Benchmark('{"family": "chain", "length": 4, "seed": 0}')
//! env, agent = bench.environment(seed=1), oms.Agent(bench, delta=0.05)
//! a = agent.start(env.reset())
//! for _ in range(1000):
//!     r, o = env.step(a)
//!     record, a = agent.observe(r, o)
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use oms_core::acceptance::{self, AcceptanceOptions};
use oms_core::agent;
use oms_core::harness::{self, fit_regret_exponent, ExperimentConfig};
use oms_core::statistics::ConfidenceWidths;
use oms_core::{
    build_benchmark, evi, oracles, AgentConfig, BenchmarkSpec, Environment as _, Observation, OmsAgent,
    OptimisticProblem, TabularMdp,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A benchmark built from its JSON spec, e.g.
/// `{"family": "korder_process", "observations": 2, "order": 2, "actions": 2, "seed": 7}`.
#[pyclass(frozen)]
struct Benchmark {
    inner: oms_core::Benchmark,
}

#[pymethods]
impl Benchmark {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: BenchmarkSpec = serde_json::from_str(spec_json).map_err(value_err)?;
        Ok(Self {
            inner: build_benchmark(&spec).map_err(value_err)?,
        })
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn num_observations(&self) -> usize {
        self.inner.num_observations()
    }

    /// Candidate model names in id order.
    fn model_names(&self) -> Vec<String> {
        self.inner.models.iter().map(|m| m.name.clone()).collect()
    }

    /// `(model_id, state_count)` of every candidate model.
    fn model_sizes(&self) -> Vec<(usize, usize)> {
        self.inner
            .models
            .iter()
            .map(|m| (m.model_id, m.state_count()))
            .collect()
    }

    /// `(model_id, rho_star, diameter)` for every Markov model.
    fn oracle(&self) -> PyResult<Vec<(usize, f64, f64)>> {
        self.inner
            .markov_models()
            .map(|id| {
                let mdp = self.inner.references[id]
                    .as_ref()
                    .expect("Markov model has a reference");
                Ok((
                    id,
                    oracles::optimal_gain(mdp, harness::REFERENCE_GAIN_PRECISION).map_err(runtime_err)?,
                    oracles::diameter(mdp, harness::REFERENCE_DIAMETER_PRECISION).map_err(runtime_err)?,
                ))
            })
            .collect()
    }

    /// A fresh environment whose randomness is fixed by `seed`.
    #[pyo3(signature = (seed=0))]
    fn environment(&self, seed: u64) -> Environment {
        Environment {
            inner: self.inner.environment(seed),
        }
    }
}

#[pyclass]
struct Environment {
    inner: oms_core::benchmarks::BenchmarkEnv,
}

#[pymethods]
impl Environment {
    /// Returns the initial observation.
    fn reset(&mut self) -> usize {
        self.inner.reset().0
    }

    /// Returns `(reward, next_observation)`.
    fn step(&mut self, action: usize) -> PyResult<(f64, usize)> {
        let (r, o) = self.inner.step(oms_core::Action(action)).map_err(value_err)?;
        Ok((r, o.0))
    }
}

fn record_dict<'py>(py: Python<'py>, rec: &agent::StepRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", rec.t)?;
    d.set_item("k", rec.k)?;
    d.set_item("j", rec.j)?;
    d.set_item("model_id", rec.model_id)?;
    d.set_item("s", rec.s)?;
    d.set_item("a", rec.a)?;
    d.set_item("r", rec.r)?;
    d.set_item("rho_kj", rec.rho_kj)?;
    d.set_item("lob", rec.lob)?;
    d.set_item("test_margin", rec.test_margin)?;
    d.set_item("event", rec.decision.event())?;
    Ok(d)
}

/// The model-selection agent over a benchmark's candidate models.
#[pyclass]
struct Agent {
    inner: OmsAgent,
}

#[pymethods]
impl Agent {
    #[new]
    #[pyo3(signature = (benchmark, delta=0.05))]
    fn new(benchmark: &Benchmark, delta: f64) -> PyResult<Self> {
        let inner = OmsAgent::new(AgentConfig {
            models: benchmark.inner.models.clone(),
            delta,
            actions: benchmark.inner.num_actions(),
        })
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Returns the first action.
    fn start(&mut self, observation: usize) -> PyResult<usize> {
        Ok(self.inner.start(Observation(observation)).map_err(value_err)?.0)
    }

    /// Feeds back `(reward, next_observation)`; returns the step record and
    /// the next action.
    fn observe<'py>(
        &mut self,
        py: Python<'py>,
        reward: f64,
        observation: usize,
    ) -> PyResult<(Bound<'py, PyDict>, usize)> {
        let (rec, a) = self
            .inner
            .observe(reward, Observation(observation))
            .map_err(value_err)?;
        Ok((record_dict(py, &rec)?, a.0))
    }

    #[getter]
    fn time(&self) -> u64 {
        self.inner.time()
    }

    /// Ids of the models not currently eliminated.
    fn candidate_set(&self) -> Vec<usize> {
        self.inner.candidate_set()
    }

    /// `(episode, run, start, model_id, rho, span_plus)` of the active run.
    fn run_state(&self) -> Option<(u64, u32, u64, usize, f64, f64)> {
        self.inner
            .run_state()
            .map(|r| (r.episode, r.run, r.start, r.model_id, r.rho, r.span_plus))
    }

    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.counters();
        let d = PyDict::new(py);
        d.set_item("episodes", c.episodes)?;
        d.set_item("runs", c.runs)?;
        d.set_item("eliminations", c.eliminations.clone())?;
        d.set_item("resets", c.resets)?;
        Ok(d)
    }

    /// Statistics of every model as JSON:
    /// `model_id -> state -> action -> {n, reward_sum, transitions}`.
    fn statistics_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.statistics().snapshot()).map_err(runtime_err)
    }
}

fn tabular(states: usize, actions: usize, rewards: Vec<f64>, transitions: Vec<Vec<f64>>) -> PyResult<TabularMdp> {
    TabularMdp::new(states, actions, rewards, transitions).map_err(value_err)
}

/// Optimal average reward of a weakly communicating MDP; rows are indexed
/// `s * actions + a`.
#[pyfunction]
#[pyo3(signature = (states, actions, rewards, transitions, precision=1e-8))]
fn optimal_gain(
    states: usize,
    actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    precision: f64,
) -> PyResult<f64> {
    oracles::optimal_gain(&tabular(states, actions, rewards, transitions)?, precision).map_err(value_err)
}

/// Diameter of a communicating MDP.
#[pyfunction]
#[pyo3(signature = (states, actions, rewards, transitions, precision=1e-9))]
fn diameter(
    states: usize,
    actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    precision: f64,
) -> PyResult<f64> {
    oracles::diameter(&tabular(states, actions, rewards, transitions)?, precision).map_err(value_err)
}

/// `(gain, policy)` by enumerating deterministic policies.
#[pyfunction]
fn enumerate_optimal_gain(
    states: usize,
    actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<f64>>,
) -> PyResult<(f64, Vec<usize>)> {
    Ok(oracles::enumerate_optimal_gain(&tabular(
        states,
        actions,
        rewards,
        transitions,
    )?))
}

/// The distribution within L1 distance `budget` of `p_hat` maximizing `q . u`.
#[pyfunction]
fn inner_max_transition(p_hat: Vec<f64>, budget: f64, u: Vec<f64>) -> PyResult<Vec<f64>> {
    evi::inner_max_transition(&p_hat, budget, &u).map_err(value_err)
}

/// Extended value iteration; returns a dict with `gain, values, policy,
/// span, sweeps`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn extended_value_iteration<'py>(
    py: Python<'py>,
    states: usize,
    actions: usize,
    mean_rewards: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    reward_widths: Vec<f64>,
    transition_budgets: Vec<f64>,
    precision: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = OptimisticProblem {
        states,
        actions,
        mean_rewards,
        transitions,
        reward_widths,
        transition_budgets,
    };
    let sol = evi::extended_value_iteration(&problem, precision).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("gain", sol.gain)?;
    d.set_item("values", sol.values)?;
    d.set_item("policy", sol.policy)?;
    d.set_item("span", sol.span)?;
    d.set_item("sweeps", sol.sweeps)?;
    Ok(d)
}

/// `(reward_width, transition_l1_width)` of one pair visited `n` times.
#[pyfunction]
fn confidence_widths(states: usize, actions: usize, n: u64, t: u64, delta: f64) -> (f64, f64) {
    let w = ConfidenceWidths::from_counts(states, actions, &vec![n; states * actions], t, delta);
    (w.reward(0, 0), w.transition_l1(0, 0))
}

/// Complexity penalty of a model with `states` states at run `run`.
#[pyfunction]
fn penalty(states: usize, actions: usize, t: u64, delta: f64, run: u32, span: f64) -> f64 {
    agent::penalty(states, actions, t, delta, run, span)
}

/// Least-squares slope of `log max(regret, 1)` against `log t` on `window`.
#[pyfunction]
fn regret_slope(points: Vec<(u64, f64)>, window: (u64, u64)) -> PyResult<f64> {
    Ok(fit_regret_exponent(points, window).map_err(value_err)?.slope)
}

/// Runs an experiment from its JSON config; writes the report when `out` is
/// given and returns the aggregate summary as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out=None))]
fn run_experiment(py: Python<'_>, config_json: &str, out: Option<std::path::PathBuf>) -> PyResult<String> {
    let config: ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let result = py.detach(|| harness::run_experiment(&config)).map_err(runtime_err)?;
    if let Some(dir) = out {
        harness::emit_report(&result, &dir).map_err(runtime_err)?;
    }
    let summary = harness::aggregate(result.traces.iter().map(|t| t.summary.clone()).collect()).map_err(runtime_err)?;
    serde_json::to_string(&summary).map_err(runtime_err)
}

/// Runs the acceptance checks; returns `(id, name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (quick=true))]
fn run_acceptance(py: Python<'_>, quick: bool) -> Vec<(u8, String, bool, String)> {
    let opts = if quick {
        AcceptanceOptions::quick()
    } else {
        AcceptanceOptions::default()
    };
    py.detach(|| acceptance::run_all(&opts))
        .into_iter()
        .map(|o| (o.id, o.name.to_string(), o.passed, o.detail))
        .collect()
}

#[pymodule]
fn oms(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Benchmark>()?;
    m.add_class::<Environment>()?;
    m.add_class::<Agent>()?;
    m.add_function(wrap_pyfunction!(optimal_gain, m)?)?;
    m.add_function(wrap_pyfunction!(diameter, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_optimal_gain, m)?)?;
    m.add_function(wrap_pyfunction!(inner_max_transition, m)?)?;
    m.add_function(wrap_pyfunction!(extended_value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_widths, m)?)?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(regret_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    Ok(())
}
