//! Agent/environment interaction contract and history-to-state models.
//!
//! Observations and actions are small integer indices into finite alphabets.
//! A [`RepresentationModel`] maps an interaction history to one of its
//! `state_count` local states. The shipped models are all of the form
//! "encode the last `k` observations, then optionally merge contexts through a
//! partition table", which covers identity models (`k = 1`), order-`k`
//! memories, and aliased partitions.
//!
//! Models are evaluated incrementally through a [`ModelTracker`]; the
//! full-history [`RepresentationModel::apply`] is kept as the reference
//! definition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into the finite observation alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation(pub usize);

/// Index into the finite action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractionError {
    #[error("action {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("environment stepped before reset")]
    NotReset,
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("observation {observation} out of range for {num_observations} observations")]
    ObservationOutOfRange {
        observation: usize,
        num_observations: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// `o_1, (a_1, r_1, o_2), ..., (a_{t-1}, r_{t-1}, o_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial: Observation,
    pub steps: Vec<(Action, f64, Observation)>,
}

impl History {
    pub fn new(initial: Observation) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    /// Current time index `t` (a fresh history is at `t = 1`).
    pub fn time(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn push(&mut self, action: Action, reward: f64, next: Observation) {
        self.steps.push((action, reward, next));
    }

    pub fn last_observation(&self) -> Observation {
        self.steps.last().map_or(self.initial, |&(_, _, o)| o)
    }

    /// Observation `o_{t-back}`, or `None` when it precedes the history.
    pub fn observation_back(&self, back: usize) -> Option<Observation> {
        let n = self.steps.len();
        match back.cmp(&n) {
            std::cmp::Ordering::Less => Some(self.steps[n - 1 - back].2),
            std::cmp::Ordering::Equal => Some(self.initial),
            std::cmp::Ordering::Greater => None,
        }
    }
}

/// `(model_id, local_state)`; realizes the disjoint union of all models'
/// state spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlobalStateId {
    pub model_id: usize,
    pub local_state: usize,
}

/// A deterministic map from histories to `[0, state_count)`.
///
/// The context index of a history is `sum_i o_{t-i} * |O|^i` over the last
/// `memory` observations, most recent observation in the lowest digit.
/// Observations before `o_1` are read as observation `0`. When a partition is
/// present the local state is `partition[context]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationModel {
    pub model_id: usize,
    pub name: String,
    num_observations: usize,
    memory: usize,
    partition: Option<Vec<usize>>,
    state_count: usize,
}

impl RepresentationModel {
    /// Model encoding the last `memory` observations.
    pub fn last_k(model_id: usize, num_observations: usize, memory: usize) -> Result<Self, InteractionError> {
        if num_observations == 0 || memory == 0 {
            return Err(InteractionError::InvalidModel(
                "need at least one observation and memory >= 1".into(),
            ));
        }
        let state_count = num_observations
            .checked_pow(memory as u32)
            .ok_or_else(|| InteractionError::InvalidModel("context space overflows".into()))?;
        Ok(Self {
            model_id,
            name: format!("last-{memory}"),
            num_observations,
            memory,
            partition: None,
            state_count,
        })
    }

    /// The last observation is the state.
    pub fn identity(model_id: usize, num_observations: usize) -> Result<Self, InteractionError> {
        let mut m = Self::last_k(model_id, num_observations, 1)?;
        m.name = "identity".into();
        Ok(m)
    }

    /// Last-`memory` contexts merged through `partition`; the labels must be
    /// exactly `0..n` for some `n >= 1`.
    pub fn partitioned(
        model_id: usize,
        num_observations: usize,
        memory: usize,
        partition: Vec<usize>,
    ) -> Result<Self, InteractionError> {
        let base = Self::last_k(model_id, num_observations, memory)?;
        if partition.len() != base.state_count {
            return Err(InteractionError::InvalidModel(format!(
                "partition has {} entries, expected {}",
                partition.len(),
                base.state_count
            )));
        }
        let state_count = partition.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; state_count];
        for &p in &partition {
            seen[p] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(InteractionError::InvalidModel(
                "partition labels must be contiguous from 0".into(),
            ));
        }
        Ok(Self {
            name: format!("partition-{state_count}"),
            partition: Some(partition),
            state_count,
            ..base
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn partition(&self) -> Option<&[usize]> {
        self.partition.as_deref()
    }

    fn context_count(&self) -> usize {
        self.num_observations.pow(self.memory as u32)
    }

    fn project(&self, context: usize) -> usize {
        match &self.partition {
            Some(p) => p[context],
            None => context,
        }
    }

    /// Full-history evaluation `phi(h_t)`.
    pub fn apply(&self, history: &History) -> GlobalStateId {
        let mut context = 0;
        let mut scale = 1;
        for back in 0..self.memory {
            let o = history.observation_back(back).map_or(0, |o| o.0);
            context += o * scale;
            scale *= self.num_observations;
        }
        GlobalStateId {
            model_id: self.model_id,
            local_state: self.project(context),
        }
    }

    pub fn tracker(&self, initial: Observation) -> ModelTracker {
        ModelTracker {
            context: initial.0 % self.context_count(),
        }
    }

    pub fn state_of(&self, tracker: &ModelTracker) -> GlobalStateId {
        GlobalStateId {
            model_id: self.model_id,
            local_state: self.project(tracker.context),
        }
    }

    /// Incremental update: fold the next observation into the tracked context.
    pub fn advance(&self, tracker: &mut ModelTracker, next: Observation) {
        let contexts = self.context_count();
        tracker.context = (tracker.context * self.num_observations) % contexts + next.0;
    }
}

/// Incremental evaluation state of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelTracker {
    context: usize,
}

/// Sequential environment emitting rewards in `[0, 1]` and observations.
pub trait Environment: Send {
    fn num_actions(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn reset(&mut self) -> Observation;
    fn step(&mut self, action: Action) -> Result<(f64, Observation), InteractionError>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn num_observations(&self) -> usize {
        (**self).num_observations()
    }
    fn reset(&mut self) -> Observation {
        (**self).reset()
    }
    fn step(&mut self, action: Action) -> Result<(f64, Observation), InteractionError> {
        (**self).step(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn history(obs: &[usize]) -> History {
        let mut h = History::new(Observation(obs[0]));
        for &o in &obs[1..] {
            h.push(Action(0), 0.0, Observation(o));
        }
        h
    }

    #[test]
    fn last_one_is_last_observation() {
        let m = RepresentationModel::identity(0, 5).unwrap();
        let s = m.apply(&history(&[0, 1, 3]));
        assert_eq!(
            s,
            GlobalStateId {
                model_id: 0,
                local_state: 3
            }
        );
    }

    #[test]
    fn last_two_positional_encoding() {
        let m = RepresentationModel::last_k(1, 2, 2).unwrap();
        // o_{t-1} = 1, o_t = 0 -> 0 + 1 * 2
        assert_eq!(m.apply(&history(&[1, 1, 0])).local_state, 2);
    }

    #[test]
    fn partition_lookup() {
        let m = RepresentationModel::partitioned(2, 3, 1, vec![0, 0, 1]).unwrap();
        assert_eq!(m.state_count(), 2);
        assert_eq!(m.apply(&history(&[2, 1])).local_state, 0);
        assert_eq!(m.apply(&history(&[2])).local_state, 1);
    }

    #[test]
    fn short_history_pads_with_zero() {
        let m = RepresentationModel::last_k(0, 3, 3).unwrap();
        assert_eq!(m.apply(&history(&[2])).local_state, 2);
        assert_eq!(m.apply(&history(&[2, 1])).local_state, 1 + 2 * 3);
    }

    #[test]
    fn bad_partitions_rejected() {
        assert!(RepresentationModel::partitioned(0, 3, 1, vec![0, 2, 2]).is_err());
        assert!(RepresentationModel::partitioned(0, 3, 1, vec![0, 1]).is_err());
        assert!(RepresentationModel::last_k(0, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn incremental_matches_full_history(
            obs in prop::collection::vec(0usize..3, 1..40),
            memory in 1usize..4,
        ) {
            let m = RepresentationModel::last_k(0, 3, memory).unwrap();
            let mut h = History::new(Observation(obs[0]));
            let mut tr = m.tracker(Observation(obs[0]));
            prop_assert_eq!(m.state_of(&tr), m.apply(&h));
            for &o in &obs[1..] {
                h.push(Action(0), 0.5, Observation(o));
                m.advance(&mut tr, Observation(o));
                prop_assert_eq!(m.state_of(&tr), m.apply(&h));
            }
        }

        #[test]
        fn agreeing_suffixes_map_to_same_state(
            a in prop::collection::vec(0usize..2, 0..20),
            b in prop::collection::vec(0usize..2, 0..20),
            suffix in prop::collection::vec(0usize..2, 2..6),
        ) {
            let m = RepresentationModel::last_k(0, 2, 2).unwrap();
            let ha: Vec<usize> = a.iter().chain(&suffix).copied().collect();
            let hb: Vec<usize> = b.iter().chain(&suffix).copied().collect();
            prop_assert_eq!(m.apply(&history(&ha)), m.apply(&history(&hb)));
        }
    }
}
