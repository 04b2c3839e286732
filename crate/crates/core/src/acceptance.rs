//! Acceptance checks. Each check returns one [`Outcome`]; the `accept`
//! subcommand and the `acceptance` test target print one line per check.
//!
//! Checks 4–6 share the same simulated traces, produced once by
//! [`run_all`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{penalty, PenaltyTerms, RunState};
use crate::benchmarks::{build_benchmark, random_mdp, Benchmark, BenchmarkFamily, BenchmarkSpec};
use crate::evi::{extended_value_iteration, inner_max_transition, OptimisticProblem};
use crate::harness::{
    episode_bound, evaluate_bound, fit_regret_exponent, format_seed_csv, reference_optimum, run_seed, BoundInputs,
    HarnessError, ReferenceOptimum, SeedTrace, TraceEvent,
};
use crate::mdp::TabularMdp;
use crate::oracles::{diameter, enumerate_optimal_gain, optimal_gain};
use crate::statistics::{confidence_widths, ConfidenceWidths, ModelStatistics};

/// Result of one acceptance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(id: u8, name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id,
            name,
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

/// Sizes of the acceptance workload.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceOptions {
    /// Sampling seeds of the simulated checks.
    pub seeds: Vec<u64>,
    pub horizon: u64,
    pub delta: f64,
    /// Slope fit window.
    pub window: (u64, u64),
    /// Random MDPs for the EVI and oracle checks.
    pub random_instances: usize,
    /// Random `(p_hat, budget, u)` triples for the inner maximization.
    pub inner_max_triples: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seeds: (0..20).collect(),
            horizon: 100_000,
            delta: 0.05,
            window: (10_000, 100_000),
            random_instances: 100,
            inner_max_triples: 1000,
        }
    }
}

impl AcceptanceOptions {
    /// Few seeds and a short horizon; verdicts are indicative only.
    pub fn quick() -> Self {
        Self {
            seeds: (0..4).collect(),
            horizon: 10_000,
            window: (1_000, 10_000),
            random_instances: 20,
            inner_max_triples: 100,
            ..Self::default()
        }
    }
}

/// Structure seed shared by the simulated benchmarks.
pub const BENCHMARK_SEED: u64 = 7;

/// Order-2 process offered `last-1` (aliased) and `last-2` (Markov).
pub fn korder_spec() -> BenchmarkSpec {
    BenchmarkSpec {
        family: BenchmarkFamily::KorderProcess {
            observations: 2,
            order: 2,
            actions: 2,
            extra_memory: 0,
        },
        seed: BENCHMARK_SEED,
    }
}

/// Four-state MDP offered its identity model and a two-state merge.
pub fn aliased_spec() -> BenchmarkSpec {
    BenchmarkSpec {
        family: BenchmarkFamily::AliasedMdp {
            states: 4,
            actions: 2,
            merge: vec![vec![0, 1]],
        },
        seed: BENCHMARK_SEED,
    }
}

/// A benchmark with its oracle reference and one trace per seed.
pub struct Simulation {
    pub benchmark: Benchmark,
    pub reference: ReferenceOptimum,
    pub traces: Vec<SeedTrace>,
}

/// Runs every seed at full logging resolution.
pub fn simulate(spec: &BenchmarkSpec, opts: &AcceptanceOptions) -> Result<Simulation, HarnessError> {
    let benchmark = build_benchmark(spec)?;
    let reference = reference_optimum(&benchmark)?;
    let traces = opts
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&benchmark, &reference, opts.delta, opts.horizon, seed, 1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Simulation {
        benchmark,
        reference,
        traces,
    })
}

fn rel_err(value: f64, golden: f64) -> f64 {
    (value - golden).abs() / golden.abs()
}

/// Check 1: confidence widths, penalty and lob against values evaluated
/// independently at 30 significant digits.
pub fn formula_goldens() -> Outcome {
    let widths = ConfidenceWidths::from_counts(2, 2, &[16; 4], 100, 0.05);
    let terms = PenaltyTerms::new(2, 2, 10, 0.05);
    let mut run = RunState::new(1, 1, 10, 0, 1.0, vec![0, 0], 2.0, 2, 2, 0.05);
    run.record(0, 1, 0.0);
    let mut flat = RunState::new(1, 1, 10, 0, 1.0, vec![0, 0], 0.0, 2, 2, 0.05);
    flat.record(0, 1, 0.0);
    let cases = [
        ("transition width", widths.transition_l1(0, 0), 1.701_739_936_514_028_4),
        ("reward width", widths.reward(1, 1), 0.838_044_660_796_305_1),
        ("c", terms.c, 32.269_382_156_688_24),
        ("c'", terms.c_prime, 22.318_744_074_107_45),
        ("penalty", penalty(2, 2, 10, 0.05, 1, 2.0), 62.417_533_177_757_31),
        ("lob", run.lob(10), 54.887_896_395_019_28),
        ("lob at zero span", flat.lob(10), 11.159_372_037_053_724),
    ];
    let worst = cases
        .iter()
        .map(|&(name, v, g)| (name, rel_err(v, g)))
        .fold(("", 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    Outcome::new(
        1,
        "formula goldens",
        worst.1 <= 1e-9,
        format!(
            "{} values, worst relative error {:.2e} ({})",
            cases.len(),
            worst.1,
            worst.0
        ),
    )
}

/// Empirical statistics from `steps` uniformly random actions on `mdp`,
/// with Bernoulli rewards.
fn sample_statistics(mdp: &TabularMdp, steps: u64, seed: u64) -> ModelStatistics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ModelStatistics::new(0, mdp.states(), mdp.actions());
    let mut s = 0;
    for _ in 0..steps {
        let a = rng.gen_range(0..mdp.actions());
        let r = if rng.gen::<f64>() < mdp.reward(s, a) { 1.0 } else { 0.0 };
        let u: f64 = rng.gen();
        let row = mdp.transition_row(s, a);
        let mut next = row.len() - 1;
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = i;
                break;
            }
        }
        stats.record(s, a, r, next).expect("sampled pair is in range");
        s = next;
    }
    stats
}

fn random_instance(i: usize) -> TabularMdp {
    let states = 2 + i % 3;
    random_mdp(states, 2, 1_000 + i as u64).expect("random MDPs are valid")
}

/// Check 2: EVI with zero widths reproduces the enumerated optimal gain; with
/// sampled widths it is optimistic whenever the true MDP is admissible.
pub fn evi_correctness(opts: &AcceptanceOptions) -> Outcome {
    const STEPS: u64 = 2_000;
    let mut worst_exact = 0.0f64;
    let mut admissible = 0;
    let mut optimism_violations = 0;
    let mut errors = Vec::new();
    for i in 0..opts.random_instances {
        let mdp = random_instance(i);
        let (rho_star, _) = enumerate_optimal_gain(&mdp);
        let (states, actions) = (mdp.states(), mdp.actions());
        let exact = OptimisticProblem::exact(
            states,
            actions,
            (0..states * actions)
                .map(|p| mdp.reward(p / actions, p % actions))
                .collect(),
            (0..states * actions)
                .map(|p| mdp.transition_row(p / actions, p % actions).to_vec())
                .collect(),
        );
        match extended_value_iteration(&exact, 1e-9) {
            Ok(sol) => worst_exact = worst_exact.max((sol.gain - rho_star).abs()),
            Err(e) => errors.push(format!("instance {i}: {e}")),
        }
        let stats = sample_statistics(&mdp, STEPS, i as u64);
        let t = STEPS + 1;
        let widths = confidence_widths(&stats, t, opts.delta);
        if !stats.is_admissible(&widths, &mdp) {
            continue;
        }
        admissible += 1;
        let tolerance = 2.0 / (t as f64).sqrt();
        match extended_value_iteration(
            &OptimisticProblem::from_statistics(&stats, &widths),
            1.0 / (t as f64).sqrt(),
        ) {
            Ok(sol) if sol.gain >= rho_star - tolerance => {}
            Ok(_) => optimism_violations += 1,
            Err(e) => errors.push(format!("instance {i} (optimistic): {e}")),
        }
    }
    let passed = errors.is_empty() && worst_exact <= 1e-6 && optimism_violations == 0;
    let mut detail = format!(
        "{} instances, max |gain - enumerated| {:.2e}; optimism held on {}/{} admissible",
        opts.random_instances,
        worst_exact,
        admissible - optimism_violations,
        admissible
    );
    if let Some(e) = errors.first() {
        detail.push_str(&format!("; {} errors, first: {e}", errors.len()));
    }
    Outcome::new(2, "EVI correctness", passed, detail)
}

fn dot(p: &[f64], u: &[f64]) -> f64 {
    p.iter().zip(u).map(|(a, b)| a * b).sum()
}

/// Best `q . u` over the simplex grid of resolution `1/steps` inside the
/// L1 ball of radius `budget` around `p_hat` (two or three outcomes).
fn grid_max(p_hat: &[f64], budget: f64, u: &[f64], steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let mut best = f64::NEG_INFINITY;
    let mut consider = |q: &[f64]| {
        let dist: f64 = q.iter().zip(p_hat).map(|(a, b)| (a - b).abs()).sum();
        if dist <= budget + 1e-12 {
            best = best.max(dot(q, u));
        }
    };
    match p_hat.len() {
        2 => {
            for i in 0..=steps {
                let x = i as f64 * h;
                consider(&[x, 1.0 - x]);
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (x, y) = (i as f64 * h, j as f64 * h);
                    consider(&[x, y, 1.0 - x - y]);
                }
            }
        }
        n => unreachable!("grid search over {n} outcomes"),
    }
    best
}

/// Check 3: inner L1 maximization against a grid search at resolution 1e-3.
pub fn inner_max_grid(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    let mut errors = 0;
    for i in 0..opts.inner_max_triples {
        let n = 2 + i % 2;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let p_hat: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let budget = rng.gen_range(0.0..=2.0);
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let Ok(q) = inner_max_transition(&p_hat, budget, &u) else {
            errors += 1;
            continue;
        };
        let dist: f64 = q.iter().zip(&p_hat).map(|(a, b)| (a - b).abs()).sum();
        let sum: f64 = q.iter().sum();
        if dist > budget + 1e-9 || (sum - 1.0).abs() > 1e-9 || q.iter().any(|&x| x < -1e-12) {
            infeasible += 1;
        }
        let grid = grid_max(&p_hat, budget, &u, 1000);
        worst = worst.max((dot(&q, &u) - grid).abs());
    }
    Outcome::new(
        3,
        "inner L1 maximization",
        errors == 0 && infeasible == 0 && worst <= 2e-3,
        format!(
            "{} triples, max |objective - grid| {:.2e}, {} infeasible, {} errors",
            opts.inner_max_triples, worst, infeasible, errors
        ),
    )
}

fn markov_eliminated(sim: &Simulation, trace: &SeedTrace) -> bool {
    sim.benchmark
        .markov_models()
        .any(|id| trace.counters.eliminations.get(id).copied().unwrap_or(0) > 0)
}

/// Check 4: the Markov model survives in all but at most one seed in twenty.
pub fn markov_survival(sim: &Simulation) -> Outcome {
    let n = sim.traces.len();
    let survived = sim.traces.iter().filter(|t| !markov_eliminated(sim, t)).count();
    // 19 of 20, scaled to the number of seeds.
    let required = (n * 19).div_ceil(20);
    Outcome::new(
        4,
        "Markov model survival",
        n > 0 && survived >= required,
        format!("Markov model never eliminated in {survived}/{n} seeds (need {required})"),
    )
}

/// Lengths of the completed runs in a full-resolution trace, with their
/// run index.
fn completed_runs(trace: &SeedTrace) -> Vec<(u32, u64)> {
    let mut runs = Vec::new();
    let mut last_end = 0;
    for row in &trace.rows {
        if row.event != TraceEvent::None {
            runs.push((row.j, row.t - last_end));
            last_end = row.t;
        }
    }
    runs
}

/// Check 5: run length, episode count and regret bookkeeping on every seed.
pub fn structural_invariants(sim: &Simulation, opts: &AcceptanceOptions) -> Outcome {
    let models = sim.benchmark.models.len();
    let states_total: usize = sim.benchmark.models.iter().map(|m| m.state_count()).sum();
    let k_bound = episode_bound(states_total, sim.benchmark.num_actions(), models, opts.horizon);
    let mut long_runs = 0;
    let mut k_violations = 0;
    let mut k_checked = 0;
    let mut worst_telescope = 0.0f64;
    let mut incomplete = 0;
    for trace in &sim.traces {
        long_runs += completed_runs(trace)
            .iter()
            .filter(|&&(j, len)| len > 1u64 << j)
            .count();
        if !markov_eliminated(sim, trace) {
            k_checked += 1;
            if trace.summary.k_t as f64 > k_bound {
                k_violations += 1;
            }
        }
        if trace.rows.len() as u64 != opts.horizon {
            incomplete += 1;
            continue;
        }
        let mut prev = 0.0;
        for row in &trace.rows {
            let step = row.regret - prev;
            worst_telescope = worst_telescope.max((step - (sim.reference.rho_star - row.r)).abs());
            prev = row.regret;
        }
    }
    Outcome::new(
        5,
        "structural invariants",
        long_runs == 0 && k_violations == 0 && incomplete == 0 && worst_telescope <= 1e-9,
        format!(
            "{long_runs} runs over 2^j; K_T <= {k_bound:.1} on {}/{k_checked} surviving seeds; \
             max telescoping error {worst_telescope:.2e}",
            k_checked - k_violations
        ),
    )
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median regret slope and the number of seeds above the regret bound.
fn rate_summary(sim: &Simulation, opts: &AcceptanceOptions) -> (Option<f64>, usize, Option<f64>) {
    let mut slopes: Vec<f64> = sim
        .traces
        .iter()
        .filter_map(|t| fit_regret_exponent(t.rows.iter().map(|r| (r.t, r.regret)), opts.window).ok())
        .map(|f| f.slope)
        .collect();
    let bound = evaluate_bound(&BoundInputs {
        diameter_star: sim.reference.diameter,
        states_star: sim.benchmark.models[sim.reference.model_id].state_count(),
        states_total: sim.benchmark.models.iter().map(|m| m.state_count()).sum(),
        actions: sim.benchmark.num_actions(),
        models: sim.benchmark.models.len(),
        delta: opts.delta,
        horizon: opts.horizon,
        rho_star: sim.reference.rho_star,
    })
    .ok();
    let over = sim
        .traces
        .iter()
        .filter(|t| bound.is_none_or(|b| t.summary.final_regret > b))
        .count();
    (median(&mut slopes), over, bound)
}

/// Check 6: median log-log regret slope at most 0.75 on both benchmarks, and
/// final regret under the theoretical bound on every seed.
pub fn regret_rate(sims: &[(&str, &Simulation)], opts: &AcceptanceOptions) -> Outcome {
    let mut passed = !sims.is_empty();
    let mut parts = Vec::new();
    for (name, sim) in sims {
        let (slope, over, bound) = rate_summary(sim, opts);
        passed &= slope.is_some_and(|s| s <= 0.75) && over == 0;
        parts.push(format!(
            "{name}: median slope {}, {over}/{} seeds over bound {}",
            slope.map_or("n/a".into(), |s| format!("{s:.3}")),
            sim.traces.len(),
            bound.map_or("n/a".into(), |b| format!("{b:.3e}")),
        ));
    }
    Outcome::new(6, "regret rate", passed, parts.join("; "))
}

/// Two states, one action, moving to the other state with probability `q`.
pub fn q_reach_mdp(q: f64) -> TabularMdp {
    TabularMdp::new(2, 1, vec![0.0, 1.0], vec![vec![1.0 - q, q], vec![q, 1.0 - q]]).expect("valid for q in (0, 1]")
}

/// Check 7: diameter of the q-reach MDP and relative value iteration against
/// policy enumeration.
pub fn oracle_checks(opts: &AcceptanceOptions) -> Outcome {
    let mut worst_d = 0.0f64;
    let mut worst_gain = 0.0f64;
    let mut errors = Vec::new();
    for q in [0.5, 0.1] {
        match diameter(&q_reach_mdp(q), 1e-9) {
            Ok(d) => worst_d = worst_d.max((d - 1.0 / q).abs()),
            Err(e) => errors.push(format!("q={q}: {e}")),
        }
    }
    for i in 0..opts.random_instances {
        let mdp = random_instance(i);
        let (rho, _) = enumerate_optimal_gain(&mdp);
        match optimal_gain(&mdp, 1e-8) {
            Ok(g) => worst_gain = worst_gain.max((g - rho).abs()),
            Err(e) => errors.push(format!("instance {i}: {e}")),
        }
    }
    let mut detail = format!(
        "max |D - 1/q| {worst_d:.2e}; max |gain - enumerated| {worst_gain:.2e} over {} instances",
        opts.random_instances
    );
    if let Some(e) = errors.first() {
        detail.push_str(&format!("; {} errors, first: {e}", errors.len()));
    }
    Outcome::new(
        7,
        "oracle checks",
        errors.is_empty() && worst_d <= 1e-6 && worst_gain <= 1e-6,
        detail,
    )
}

/// Check 8: re-running a seed reproduces its CSV byte for byte.
pub fn determinism(sim: &Simulation, opts: &AcceptanceOptions) -> Outcome {
    let Some(first) = sim.traces.first() else {
        return Outcome::new(8, "determinism", false, "no trace to replay");
    };
    let replay = run_seed(&sim.benchmark, &sim.reference, opts.delta, opts.horizon, first.seed, 1);
    match replay {
        Ok(again) => {
            let (a, b) = (format_seed_csv(&first.rows), format_seed_csv(&again.rows));
            Outcome::new(
                8,
                "determinism",
                a == b,
                format!("seed {}: {} bytes, identical = {}", first.seed, a.len(), a == b),
            )
        }
        Err(e) => Outcome::new(8, "determinism", false, e.to_string()),
    }
}

fn simulation_failure(ids: &[(u8, &'static str)], err: &HarnessError) -> Vec<Outcome> {
    ids.iter()
        .map(|&(id, name)| Outcome::new(id, name, false, format!("simulation failed: {err}")))
        .collect()
}

/// Runs every check in order.
pub fn run_all(opts: &AcceptanceOptions) -> Vec<Outcome> {
    let mut out = vec![formula_goldens(), evi_correctness(opts), inner_max_grid(opts)];
    let korder = simulate(&korder_spec(), opts);
    let aliased = simulate(&aliased_spec(), opts);
    match &korder {
        Ok(sim) => {
            out.push(markov_survival(sim));
            out.push(structural_invariants(sim, opts));
        }
        Err(e) => out.extend(simulation_failure(
            &[(4, "Markov model survival"), (5, "structural invariants")],
            e,
        )),
    }
    match (&korder, &aliased) {
        (Ok(k), Ok(a)) => out.push(regret_rate(&[("korder", k), ("aliased", a)], opts)),
        (Err(e), _) | (_, Err(e)) => out.extend(simulation_failure(&[(6, "regret rate")], e)),
    }
    out.push(oracle_checks(opts));
    match &korder {
        Ok(sim) => out.push(determinism(sim, opts)),
        Err(e) => out.extend(simulation_failure(&[(8, "determinism")], e)),
    }
    out
}
