//! Extended value iteration over the admissible MDP set of one model.
//!
//! Each sweep computes, for every state,
//! `max_a { r_hat(s,a) + w_r(s,a) + max_{p in B(s,a)} p . u }`, where `B(s,a)`
//! is the L1 ball of radius `min(w_p(s,a), 2)` around `p_hat(.|s,a)`
//! intersected with the simplex. The iterate is shifted so its minimum is zero
//! after every sweep. Iteration stops when the span of the last difference
//! vector is below the requested precision.

use thiserror::Error;

use crate::statistics::{ConfidenceWidths, ModelStatistics};

/// Sweep cap; EVI always converges, so reaching it signals a defect.
pub const EVI_SWEEP_CAP: usize = 1_000_000;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EviError {
    #[error("empirical distribution is malformed: {0}")]
    MalformedDistribution(String),
    #[error("L1 budget {0} outside [0, 2]")]
    BadBudget(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precision must be positive, got {0}")]
    BadPrecision(f64),
    #[error("no convergence after {sweeps} sweeps")]
    IterationCap { sweeps: usize, last: Vec<f64> },
}

/// `max(u) - min(u)`.
pub fn span(u: &[f64]) -> f64 {
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if u.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// States sorted by ascending value, ties by lowest index.
fn ascending_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(a.cmp(&b)));
    order
}

/// First index attaining the maximum of `u`.
fn argmax(u: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in u.iter().enumerate() {
        if x > u[best] {
            best = i;
        }
    }
    best
}

fn check_distribution(p: &[f64]) -> Result<(), EviError> {
    if p.is_empty() {
        return Err(EviError::MalformedDistribution("empty".into()));
    }
    if let Some(x) = p.iter().find(|&&x| x.is_nan() || x < 0.0) {
        return Err(EviError::MalformedDistribution(format!("entry {x}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(EviError::MalformedDistribution(format!("sum {sum}")));
    }
    Ok(())
}

/// `argmax_p p . u` over `{p in simplex : |p - p_hat|_1 <= budget}`.
pub fn inner_max_transition(p_hat: &[f64], budget: f64, u: &[f64]) -> Result<Vec<f64>, EviError> {
    check_distribution(p_hat)?;
    if !(0.0..=2.0).contains(&budget) {
        return Err(EviError::BadBudget(budget));
    }
    if u.len() != p_hat.len() {
        return Err(EviError::Shape(format!(
            "{} values for {} states",
            u.len(),
            p_hat.len()
        )));
    }
    let order = ascending_order(u);
    let mut p = p_hat.to_vec();
    fill_max_transition(&mut p, budget, &order, argmax(u));
    Ok(p)
}

/// In-place core of [`inner_max_transition`]; `order` is the ascending value
/// order and `best` the maximizing state.
fn fill_max_transition(p: &mut [f64], budget: f64, order: &[usize], best: usize) {
    let added = (budget / 2.0).min(1.0 - p[best]);
    if added <= 0.0 {
        return;
    }
    p[best] += added;
    let mut excess = added;
    for &s in order {
        if excess <= 0.0 {
            break;
        }
        if s == best {
            continue;
        }
        let removed = p[s].min(excess);
        p[s] -= removed;
        excess -= removed;
    }
    // Keep the row exactly stochastic.
    let rest: f64 = p.iter().enumerate().filter(|&(i, _)| i != best).map(|(_, x)| x).sum();
    p[best] = 1.0 - rest;
}

/// Empirical estimates and widths for one model, the input to EVI.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticProblem {
    pub states: usize,
    pub actions: usize,
    /// `r_hat(s,a)`, indexed `s * actions + a`.
    pub mean_rewards: Vec<f64>,
    /// `p_hat(.|s,a)` rows, indexed `s * actions + a`.
    pub transitions: Vec<Vec<f64>>,
    pub reward_widths: Vec<f64>,
    /// L1 budgets, already clipped to `[0, 2]`.
    pub transition_budgets: Vec<f64>,
}

impl OptimisticProblem {
    pub fn from_statistics(stats: &ModelStatistics, widths: &ConfidenceWidths) -> Self {
        let (states, actions) = (stats.states, stats.actions);
        let mut problem = Self {
            states,
            actions,
            mean_rewards: Vec::with_capacity(states * actions),
            transitions: Vec::with_capacity(states * actions),
            reward_widths: Vec::with_capacity(states * actions),
            transition_budgets: Vec::with_capacity(states * actions),
        };
        for s in 0..states {
            for a in 0..actions {
                problem.mean_rewards.push(stats.mean_reward(s, a));
                problem.transitions.push(stats.empirical_transition(s, a));
                problem.reward_widths.push(widths.reward(s, a));
                problem.transition_budgets.push(widths.transition_budget(s, a));
            }
        }
        problem
    }

    /// Known model with zero widths.
    pub fn exact(states: usize, actions: usize, rewards: Vec<f64>, transitions: Vec<Vec<f64>>) -> Self {
        let n = states * actions;
        Self {
            states,
            actions,
            mean_rewards: rewards,
            transitions,
            reward_widths: vec![0.0; n],
            transition_budgets: vec![0.0; n],
        }
    }

    fn validate(&self) -> Result<(), EviError> {
        let n = self.states * self.actions;
        if n == 0 {
            return Err(EviError::Shape("empty model".into()));
        }
        if self.mean_rewards.len() != n
            || self.transitions.len() != n
            || self.reward_widths.len() != n
            || self.transition_budgets.len() != n
        {
            return Err(EviError::Shape("per-pair vectors have the wrong length".into()));
        }
        for (row, &b) in self.transitions.iter().zip(&self.transition_budgets) {
            if row.len() != self.states {
                return Err(EviError::Shape("transition row length".into()));
            }
            check_distribution(row)?;
            if !(0.0..=2.0).contains(&b) {
                return Err(EviError::BadBudget(b));
            }
        }
        Ok(())
    }
}

/// Result of extended value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticSolution {
    /// `u+`, shifted so that its minimum is zero.
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    /// Approximate optimistic gain `min_s { r+(s,pi(s)) + p+(.|s) . u+ - u+(s) }`.
    pub gain: f64,
    /// `r_hat + w_r` for every pair, unclipped.
    pub optimistic_rewards: Vec<f64>,
    /// Optimistic next-state distributions under `policy`.
    pub optimistic_transitions: Vec<Vec<f64>>,
    pub span: f64,
    pub sweeps: usize,
}

impl OptimisticSolution {
    /// Whether any optimistic reward exceeds 1.
    pub fn has_super_unit_rewards(&self) -> bool {
        self.optimistic_rewards.iter().any(|&r| r > 1.0)
    }
}

pub fn extended_value_iteration(problem: &OptimisticProblem, precision: f64) -> Result<OptimisticSolution, EviError> {
    extended_value_iteration_from(problem, precision, &vec![0.0; problem.states])
}

/// EVI started from `initial` instead of the zero vector.
pub fn extended_value_iteration_from(
    problem: &OptimisticProblem,
    precision: f64,
    initial: &[f64],
) -> Result<OptimisticSolution, EviError> {
    problem.validate()?;
    if precision.is_nan() || precision <= 0.0 {
        return Err(EviError::BadPrecision(precision));
    }
    if initial.len() != problem.states {
        return Err(EviError::Shape("initial vector length".into()));
    }
    let (n, k) = (problem.states, problem.actions);
    let optimistic_rewards: Vec<f64> = problem
        .mean_rewards
        .iter()
        .zip(&problem.reward_widths)
        .map(|(r, w)| r + w)
        .collect();

    let lo = initial.iter().copied().fold(f64::INFINITY, f64::min);
    let mut u: Vec<f64> = initial.iter().map(|x| x - lo).collect();
    let mut next = vec![0.0; n];
    let mut policy = vec![0; n];
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut scratch = vec![0.0; n];

    for sweep in 1..=EVI_SWEEP_CAP {
        let order = ascending_order(&u);
        let best = argmax(&u);
        for s in 0..n {
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..k {
                let pair = s * k + a;
                scratch.copy_from_slice(&problem.transitions[pair]);
                fill_max_transition(&mut scratch, problem.transition_budgets[pair], &order, best);
                let q = optimistic_rewards[pair] + dot(&scratch, &u);
                if q > best_q {
                    best_q = q;
                    policy[s] = a;
                    rows[s].clear();
                    rows[s].extend_from_slice(&scratch);
                }
            }
            next[s] = best_q;
        }
        let (dlo, dhi) = next
            .iter()
            .zip(&u)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if dhi - dlo < precision {
            // Gain from the greedy optimistic model evaluated at the iterate it
            // was computed against.
            let gain = (0..n)
                .map(|s| optimistic_rewards[s * k + policy[s]] + dot(&rows[s], &u) - u[s])
                .fold(f64::INFINITY, f64::min);
            return Ok(OptimisticSolution {
                span: span(&u),
                values: u,
                policy,
                gain,
                optimistic_rewards,
                optimistic_transitions: rows,
                sweeps: sweep,
            });
        }
        let shift = next.iter().copied().fold(f64::INFINITY, f64::min);
        for (ui, ni) in u.iter_mut().zip(&next) {
            *ui = ni - shift;
        }
    }
    Err(EviError::IterationCap {
        sweeps: EVI_SWEEP_CAP,
        last: u,
    })
}

#[inline]
fn dot(p: &[f64], u: &[f64]) -> f64 {
    p.iter().zip(u).map(|(a, b)| a * b).sum()
}
