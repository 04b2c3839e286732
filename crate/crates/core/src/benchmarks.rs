//! Benchmark environments together with their candidate model sets and the
//! exact MDP induced by each Markov model.
//!
//! Four families are provided:
//! - `chain`: a RiverSwim-style chain observed directly.
//! - `random_mdp`: a seeded random MDP observed directly.
//! - `korder_process`: observations follow a seeded order-`k` process; the
//!   candidates are the last-1 ... last-`k` (plus optional longer) memories.
//! - `aliased_mdp`: a seeded random MDP observed directly, offered together
//!   with partitions that merge groups of its states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interaction::{Action, Environment, InteractionError, Observation, RepresentationModel};
use crate::mdp::{MdpError, TabularMdp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("invalid benchmark parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Model(#[from] InteractionError),
}

fn default_p_forward() -> f64 {
    0.35
}
fn default_p_backward() -> f64 {
    0.05
}
fn default_left_reward() -> f64 {
    0.05
}
fn default_right_reward() -> f64 {
    1.0
}
fn default_merge() -> Vec<Vec<usize>> {
    vec![vec![0, 1]]
}

/// Family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BenchmarkFamily {
    /// Action 0 moves left deterministically; action 1 drifts right.
    Chain {
        length: usize,
        #[serde(default = "default_p_forward")]
        p_forward: f64,
        #[serde(default = "default_p_backward")]
        p_backward: f64,
        /// Mean reward for moving left in the leftmost state.
        #[serde(default = "default_left_reward")]
        left_reward: f64,
        /// Mean reward for pushing right in the rightmost state.
        #[serde(default = "default_right_reward")]
        right_reward: f64,
    },
    RandomMdp {
        states: usize,
        actions: usize,
    },
    KorderProcess {
        observations: usize,
        order: usize,
        actions: usize,
        /// Longer memories offered beyond `order`.
        #[serde(default)]
        extra_memory: usize,
    },
    AliasedMdp {
        states: usize,
        actions: usize,
        /// Groups of states merged by the aliased model.
        #[serde(default = "default_merge")]
        merge: Vec<Vec<usize>>,
    },
}

/// Benchmark family plus the seed that draws its structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    #[serde(flatten)]
    pub family: BenchmarkFamily,
    #[serde(default)]
    pub seed: u64,
}

/// Dynamics shared by every environment built from one spec.
#[derive(Debug, Clone, PartialEq)]
enum Dynamics {
    Tabular(TabularMdp),
    KOrder(KOrderTable),
}

/// `P(o' | last k observations, a)` and deterministic rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct KOrderTable {
    pub observations: usize,
    pub order: usize,
    pub actions: usize,
    /// Indexed `context * actions + a`.
    pub next: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl KOrderTable {
    fn contexts(&self) -> usize {
        self.observations.pow(self.order as u32)
    }

    /// Exact MDP over last-`memory` contexts, `memory >= order`.
    pub fn induced_mdp(&self, memory: usize) -> Result<TabularMdp, MdpError> {
        let o = self.observations;
        let states = o.pow(memory as u32);
        let base = self.contexts();
        let mut rewards = Vec::with_capacity(states * self.actions);
        let mut rows = Vec::with_capacity(states * self.actions);
        for c in 0..states {
            let short = c % base;
            for a in 0..self.actions {
                rewards.push(self.rewards[short * self.actions + a]);
                let mut row = vec![0.0; states];
                for (obs, &p) in self.next[short * self.actions + a].iter().enumerate() {
                    row[(c * o) % states + obs] += p;
                }
                rows.push(row);
            }
        }
        TabularMdp::new(states, self.actions, rewards, rows)
    }
}

/// Environment instance, replayable from its sampling seed.
#[derive(Debug, Clone)]
pub struct BenchmarkEnv {
    dynamics: Dynamics,
    rng: ChaCha8Rng,
    current: Option<usize>,
}

fn sample(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    // Rounding slack: the last state with positive mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl Environment for BenchmarkEnv {
    fn num_actions(&self) -> usize {
        match &self.dynamics {
            Dynamics::Tabular(m) => m.actions(),
            Dynamics::KOrder(k) => k.actions,
        }
    }

    fn num_observations(&self) -> usize {
        match &self.dynamics {
            Dynamics::Tabular(m) => m.states(),
            Dynamics::KOrder(k) => k.observations,
        }
    }

    /// Starts in state 0 (or the all-zero context).
    fn reset(&mut self) -> Observation {
        self.current = Some(0);
        Observation(0)
    }

    fn step(&mut self, action: Action) -> Result<(f64, Observation), InteractionError> {
        let num_actions = self.num_actions();
        if action.0 >= num_actions {
            return Err(InteractionError::ActionOutOfRange {
                action: action.0,
                num_actions,
            });
        }
        let current = self.current.ok_or(InteractionError::NotReset)?;
        match &self.dynamics {
            Dynamics::Tabular(m) => {
                let mean = m.reward(current, action.0);
                let reward = if self.rng.gen::<f64>() < mean { 1.0 } else { 0.0 };
                let next = sample(m.transition_row(current, action.0), &mut self.rng);
                self.current = Some(next);
                Ok((reward, Observation(next)))
            }
            Dynamics::KOrder(k) => {
                let pair = current * k.actions + action.0;
                let reward = k.rewards[pair];
                let obs = sample(&k.next[pair], &mut self.rng);
                self.current = Some((current * k.observations) % k.contexts() + obs);
                Ok((reward, Observation(obs)))
            }
        }
    }
}

/// Environment template, candidate models, and the exact MDP of every Markov
/// candidate (`None` for candidates that are not Markov).
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub models: Vec<RepresentationModel>,
    pub references: Vec<Option<TabularMdp>>,
    dynamics: Dynamics,
}

impl Benchmark {
    /// Fresh environment whose randomness is driven by `sampling_seed`.
    pub fn environment(&self, sampling_seed: u64) -> BenchmarkEnv {
        BenchmarkEnv {
            dynamics: self.dynamics.clone(),
            rng: ChaCha8Rng::seed_from_u64(sampling_seed),
            current: None,
        }
    }

    pub fn num_actions(&self) -> usize {
        match &self.dynamics {
            Dynamics::Tabular(m) => m.actions(),
            Dynamics::KOrder(k) => k.actions,
        }
    }

    pub fn num_observations(&self) -> usize {
        match &self.dynamics {
            Dynamics::Tabular(m) => m.states(),
            Dynamics::KOrder(k) => k.observations,
        }
    }

    /// Ids of the Markov candidates.
    pub fn markov_models(&self) -> impl Iterator<Item = usize> + '_ {
        self.references
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|_| i))
    }

    /// The hidden dynamics, for tabular families.
    pub fn underlying_mdp(&self) -> Option<&TabularMdp> {
        match &self.dynamics {
            Dynamics::Tabular(m) => Some(m),
            Dynamics::KOrder(_) => None,
        }
    }

    pub fn korder_table(&self) -> Option<&KOrderTable> {
        match &self.dynamics {
            Dynamics::KOrder(k) => Some(k),
            Dynamics::Tabular(_) => None,
        }
    }
}

pub fn chain_mdp(
    length: usize,
    p_forward: f64,
    p_backward: f64,
    left_reward: f64,
    right_reward: f64,
) -> Result<TabularMdp, BenchmarkError> {
    if length < 2 {
        return Err(BenchmarkError::Invalid("chain length must be at least 2".into()));
    }
    if !(p_forward > 0.0 && p_backward >= 0.0 && p_forward + p_backward <= 1.0) {
        return Err(BenchmarkError::Invalid("chain drift probabilities".into()));
    }
    let last = length - 1;
    let mut rewards = Vec::with_capacity(2 * length);
    let mut rows = Vec::with_capacity(2 * length);
    for s in 0..length {
        let mut left = vec![0.0; length];
        left[s.saturating_sub(1)] = 1.0;
        rewards.push(if s == 0 { left_reward } else { 0.0 });
        rows.push(left);

        let mut right = vec![0.0; length];
        if s == 0 {
            right[1] += p_forward;
            right[0] += 1.0 - p_forward;
        } else if s == last {
            right[s - 1] += p_backward;
            right[s] += 1.0 - p_backward;
        } else {
            right[s + 1] += p_forward;
            right[s - 1] += p_backward;
            right[s] += 1.0 - p_forward - p_backward;
        }
        rewards.push(if s == last { right_reward } else { 0.0 });
        rows.push(right);
    }
    Ok(TabularMdp::new(length, 2, rewards, rows)?)
}

/// Positive random distribution over `n` outcomes with a skewed profile.
fn random_row(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            u * u * u + 0.02
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let rest: f64 = row[..n - 1].iter().sum();
    row[n - 1] = 1.0 - rest;
    row
}

/// Communicating random MDP with mean rewards uniform in `[0, 1]`.
pub fn random_mdp(states: usize, actions: usize, seed: u64) -> Result<TabularMdp, BenchmarkError> {
    if states == 0 || actions == 0 {
        return Err(BenchmarkError::Invalid("random MDP needs states and actions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rewards = Vec::with_capacity(states * actions);
    let mut rows = Vec::with_capacity(states * actions);
    for _ in 0..states * actions {
        rewards.push(rng.gen::<f64>());
        rows.push(random_row(states, &mut rng));
    }
    Ok(TabularMdp::new(states, actions, rewards, rows)?)
}

pub fn korder_table(
    observations: usize,
    order: usize,
    actions: usize,
    seed: u64,
) -> Result<KOrderTable, BenchmarkError> {
    if observations == 0 || order == 0 || actions == 0 {
        return Err(BenchmarkError::Invalid("k-order process sizes must be positive".into()));
    }
    let contexts = observations
        .checked_pow(order as u32)
        .ok_or_else(|| BenchmarkError::Invalid("context space overflows".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = Vec::with_capacity(contexts * actions);
    let mut rewards = Vec::with_capacity(contexts * actions);
    for _ in 0..contexts * actions {
        rewards.push(rng.gen::<f64>());
        next.push(random_row(observations, &mut rng));
    }
    Ok(KOrderTable {
        observations,
        order,
        actions,
        next,
        rewards,
    })
}

/// Partition labels in order of first appearance.
fn merge_partition(states: usize, groups: &[Vec<usize>]) -> Result<Vec<usize>, BenchmarkError> {
    let mut group_of = vec![None; states];
    for (g, members) in groups.iter().enumerate() {
        for &s in members {
            if s >= states {
                return Err(BenchmarkError::Invalid(format!("merged state {s} out of range")));
            }
            if group_of[s].replace(g).is_some() {
                return Err(BenchmarkError::Invalid(format!("state {s} merged twice")));
            }
        }
    }
    let mut labels = Vec::with_capacity(states);
    let mut seen_groups: Vec<Option<usize>> = vec![None; groups.len()];
    let mut next_label = 0;
    for g in group_of {
        let label = match g {
            Some(g) => *seen_groups[g].get_or_insert_with(|| {
                next_label += 1;
                next_label - 1
            }),
            None => {
                next_label += 1;
                next_label - 1
            }
        };
        labels.push(label);
    }
    Ok(labels)
}

pub fn build_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark, BenchmarkError> {
    let (dynamics, models, references) = match &spec.family {
        BenchmarkFamily::Chain {
            length,
            p_forward,
            p_backward,
            left_reward,
            right_reward,
        } => {
            let mdp = chain_mdp(*length, *p_forward, *p_backward, *left_reward, *right_reward)?;
            let models = vec![RepresentationModel::identity(0, *length)?];
            (Dynamics::Tabular(mdp.clone()), models, vec![Some(mdp)])
        }
        BenchmarkFamily::RandomMdp { states, actions } => {
            let mdp = random_mdp(*states, *actions, spec.seed)?;
            let models = vec![RepresentationModel::identity(0, *states)?];
            (Dynamics::Tabular(mdp.clone()), models, vec![Some(mdp)])
        }
        BenchmarkFamily::KorderProcess {
            observations,
            order,
            actions,
            extra_memory,
        } => {
            let table = korder_table(*observations, *order, *actions, spec.seed)?;
            let mut models = Vec::new();
            let mut references = Vec::new();
            for memory in 1..=order + extra_memory {
                models.push(RepresentationModel::last_k(memory - 1, *observations, memory)?);
                references.push(if memory >= *order {
                    Some(table.induced_mdp(memory)?)
                } else {
                    None
                });
            }
            (Dynamics::KOrder(table), models, references)
        }
        BenchmarkFamily::AliasedMdp { states, actions, merge } => {
            if merge.iter().all(|g| g.len() < 2) {
                return Err(BenchmarkError::Invalid(
                    "aliased MDP needs a group of at least two states".into(),
                ));
            }
            let mdp = random_mdp(*states, *actions, spec.seed)?;
            let partition = merge_partition(*states, merge)?;
            let models = vec![
                RepresentationModel::identity(0, *states)?,
                RepresentationModel::partitioned(1, *states, 1, partition)?.with_name("aliased"),
            ];
            (Dynamics::Tabular(mdp.clone()), models, vec![Some(mdp), None])
        }
    };
    for r in references.iter().flatten() {
        if !r.is_communicating() {
            return Err(BenchmarkError::Mdp(MdpError::NotCommunicating));
        }
    }
    Ok(Benchmark {
        spec: spec.clone(),
        models,
        references,
        dynamics,
    })
}
