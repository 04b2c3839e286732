//! Per-model sufficient statistics and the confidence widths that define the
//! admissible MDP set at time `t`.
//!
//! All logarithms are natural. `delta_t = delta / (36 t^2)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interaction::{Action, GlobalStateId, RepresentationModel};
use crate::mdp::TabularMdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatisticsError {
    #[error("transition crosses models: {from} -> {to}")]
    ModelMismatch { from: usize, to: usize },
    #[error("unknown model {0}")]
    UnknownModel(usize),
    #[error("state or action out of range for model {0}")]
    OutOfRange(usize),
}

/// Counts for a single model over `S_phi x A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStatistics {
    pub model_id: usize,
    pub states: usize,
    pub actions: usize,
    visits: Vec<u64>,
    reward_sums: Vec<f64>,
    // [s][a][s']
    transitions: Vec<u64>,
}

impl ModelStatistics {
    pub fn new(model_id: usize, states: usize, actions: usize) -> Self {
        Self {
            model_id,
            states,
            actions,
            visits: vec![0; states * actions],
            reward_sums: vec![0.0; states * actions],
            transitions: vec![0; states * actions * states],
        }
    }

    #[inline]
    fn pair(&self, s: usize, a: usize) -> usize {
        s * self.actions + a
    }

    pub fn record(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<(), StatisticsError> {
        if s >= self.states || s_next >= self.states || a >= self.actions {
            return Err(StatisticsError::OutOfRange(self.model_id));
        }
        let p = self.pair(s, a);
        self.visits[p] += 1;
        self.reward_sums[p] += r;
        self.transitions[p * self.states + s_next] += 1;
        Ok(())
    }

    /// Raw visit count `N(s, a)`.
    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[self.pair(s, a)]
    }

    /// `max(N(s, a), 1)`.
    pub fn effective_visits(&self, s: usize, a: usize) -> u64 {
        self.visits(s, a).max(1)
    }

    pub fn reward_sum(&self, s: usize, a: usize) -> f64 {
        self.reward_sums[self.pair(s, a)]
    }

    pub fn transition_count(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.transitions[self.pair(s, a) * self.states + s_next]
    }

    /// Empirical mean reward; `0` for an unvisited pair.
    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        let n = self.visits(s, a);
        if n == 0 {
            0.0
        } else {
            self.reward_sum(s, a) / n as f64
        }
    }

    /// Empirical next-state distribution; a point mass on state `0` for an
    /// unvisited pair.
    pub fn empirical_transition(&self, s: usize, a: usize) -> Vec<f64> {
        let n = self.visits(s, a);
        let base = self.pair(s, a) * self.states;
        if n == 0 {
            let mut row = vec![0.0; self.states];
            row[0] = 1.0;
            return row;
        }
        self.transitions[base..base + self.states]
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect()
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }

    /// Snapshot of the effective counts, as used by the episode doubling check.
    pub fn effective_visit_table(&self) -> Vec<u64> {
        self.visits.iter().map(|&n| n.max(1)).collect()
    }

    /// Whether `candidate` lies in the admissible set described by `widths`.
    pub fn is_admissible(&self, widths: &ConfidenceWidths, candidate: &TabularMdp) -> bool {
        if candidate.states() != self.states || candidate.actions() != self.actions {
            return false;
        }
        for s in 0..self.states {
            for a in 0..self.actions {
                let p_hat = self.empirical_transition(s, a);
                let l1: f64 = candidate
                    .transition_row(s, a)
                    .iter()
                    .zip(&p_hat)
                    .map(|(p, q)| (p - q).abs())
                    .sum();
                if l1 > widths.transition_l1(s, a) {
                    return false;
                }
                if (candidate.reward(s, a) - self.mean_reward(s, a)).abs() > widths.reward(s, a) {
                    return false;
                }
            }
        }
        true
    }
}

/// `delta / (36 t^2)`.
pub fn delta_at(delta: f64, t: u64) -> f64 {
    let t = t as f64;
    delta / (36.0 * t * t)
}

/// `ln(2^S * S * A * t / delta_t)`, computed without forming `2^S`.
pub fn transition_log_term(states: usize, actions: usize, t: u64, delta: f64) -> f64 {
    states as f64 * std::f64::consts::LN_2 + ((states * actions) as f64 * t as f64 / delta_at(delta, t)).ln()
}

/// `ln(2 * S * A * t / delta_t)`.
pub fn reward_log_term(states: usize, actions: usize, t: u64, delta: f64) -> f64 {
    (2.0 * (states * actions) as f64 * t as f64 / delta_at(delta, t)).ln()
}

/// Confidence widths for every `(s, a)` of one model at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWidths {
    pub t: u64,
    pub delta_t: f64,
    pub actions: usize,
    reward: Vec<f64>,
    transition_l1: Vec<f64>,
}

impl ConfidenceWidths {
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }

    /// Unclipped analytic L1 width.
    pub fn transition_l1(&self, s: usize, a: usize) -> f64 {
        self.transition_l1[s * self.actions + a]
    }

    /// L1 width clipped to the total-variation limit of 2.
    pub fn transition_budget(&self, s: usize, a: usize) -> f64 {
        self.transition_l1(s, a).min(2.0)
    }

    /// Widths of the given pairs computed from explicit effective counts;
    /// exposed for diagnostics and tests.
    pub fn from_counts(states: usize, actions: usize, counts: &[u64], t: u64, delta: f64) -> Self {
        assert_eq!(counts.len(), states * actions);
        let lp = transition_log_term(states, actions, t, delta);
        let lr = reward_log_term(states, actions, t, delta);
        let (mut reward, mut transition_l1) = (Vec::with_capacity(counts.len()), Vec::with_capacity(counts.len()));
        for &n in counts {
            let n = n.max(1) as f64;
            transition_l1.push((2.0 * lp / n).sqrt());
            reward.push((lr / (2.0 * n)).sqrt());
        }
        Self {
            t,
            delta_t: delta_at(delta, t),
            actions,
            reward,
            transition_l1,
        }
    }
}

/// Confidence widths of `stats` at time `t` with confidence `delta`.
pub fn confidence_widths(stats: &ModelStatistics, t: u64, delta: f64) -> ConfidenceWidths {
    ConfidenceWidths::from_counts(stats.states, stats.actions, &stats.visits, t.max(1), delta)
}

/// Statistics for every model in `Phi_0`, indexed by model id.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStatistics {
    models: Vec<ModelStatistics>,
}

impl SufficientStatistics {
    pub fn new(models: &[RepresentationModel], actions: usize) -> Self {
        Self {
            models: models
                .iter()
                .map(|m| ModelStatistics::new(m.model_id, m.state_count(), actions))
                .collect(),
        }
    }

    pub fn model(&self, model_id: usize) -> Result<&ModelStatistics, StatisticsError> {
        self.models.get(model_id).ok_or(StatisticsError::UnknownModel(model_id))
    }

    pub fn models(&self) -> &[ModelStatistics] {
        &self.models
    }

    pub fn update_counts(
        &mut self,
        s: GlobalStateId,
        a: Action,
        r: f64,
        s_next: GlobalStateId,
    ) -> Result<(), StatisticsError> {
        if s.model_id != s_next.model_id {
            return Err(StatisticsError::ModelMismatch {
                from: s.model_id,
                to: s_next.model_id,
            });
        }
        self.models
            .get_mut(s.model_id)
            .ok_or(StatisticsError::UnknownModel(s.model_id))?
            .record(s.local_state, a.0, r, s_next.local_state)
    }

    /// JSON-ready snapshot: `model_id -> state -> action -> {n, reward_sum, transitions}`.
    pub fn snapshot(&self) -> StatisticsSnapshot {
        let mut out = BTreeMap::new();
        for m in &self.models {
            let mut states = BTreeMap::new();
            for s in 0..m.states {
                let mut actions = BTreeMap::new();
                for a in 0..m.actions {
                    let transitions = (0..m.states)
                        .filter_map(|s2| {
                            let c = m.transition_count(s, a, s2);
                            (c > 0).then_some((s2, c))
                        })
                        .collect();
                    actions.insert(
                        a,
                        PairSnapshot {
                            n: m.visits(s, a),
                            reward_sum: m.reward_sum(s, a),
                            transitions,
                        },
                    );
                }
                states.insert(s, actions);
            }
            out.insert(m.model_id, states);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSnapshot {
    pub n: u64,
    pub reward_sum: f64,
    pub transitions: BTreeMap<usize, u64>,
}

pub type StatisticsSnapshot = BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, PairSnapshot>>>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(model_id: usize, local_state: usize) -> GlobalStateId {
        GlobalStateId { model_id, local_state }
    }

    fn stats() -> SufficientStatistics {
        let models = vec![
            RepresentationModel::identity(0, 2).unwrap(),
            RepresentationModel::last_k(1, 2, 2).unwrap(),
        ];
        SufficientStatistics::new(&models, 2)
    }

    #[test]
    fn single_update() {
        let mut st = stats();
        st.update_counts(g(0, 0), Action(0), 0.5, g(0, 1)).unwrap();
        let m = st.model(0).unwrap();
        assert_eq!(m.visits(0, 0), 1);
        assert_eq!(m.mean_reward(0, 0), 0.5);
        assert_eq!(m.empirical_transition(0, 0), vec![0.0, 1.0]);
    }

    #[test]
    fn two_updates() {
        let mut st = stats();
        st.update_counts(g(0, 0), Action(0), 1.0, g(0, 0)).unwrap();
        st.update_counts(g(0, 0), Action(0), 0.0, g(0, 1)).unwrap();
        let m = st.model(0).unwrap();
        assert_eq!(m.mean_reward(0, 0), 0.5);
        assert_eq!(m.empirical_transition(0, 0), vec![0.5, 0.5]);
    }

    #[test]
    fn unvisited_defaults() {
        let st = stats();
        let m = st.model(1).unwrap();
        assert_eq!(m.visits(3, 1), 0);
        assert_eq!(m.effective_visits(3, 1), 1);
        assert_eq!(m.mean_reward(3, 1), 0.0);
        assert_eq!(m.empirical_transition(3, 1), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mismatched_models_rejected() {
        let mut st = stats();
        let err = st.update_counts(g(0, 0), Action(0), 0.0, g(1, 0)).unwrap_err();
        assert_eq!(err, StatisticsError::ModelMismatch { from: 0, to: 1 });
        assert!(st.update_counts(g(0, 2), Action(0), 0.0, g(0, 0)).is_err());
        assert!(st.update_counts(g(5, 0), Action(0), 0.0, g(5, 0)).is_err());
    }

    #[test]
    fn golden_widths() {
        let w = ConfidenceWidths::from_counts(2, 2, &[16; 4], 100, 0.05);
        // Evaluated at 30 digits independently.
        let trans = 1.701_739_936_514_028_4;
        let rew = 0.838_044_660_796_305_1;
        assert!((w.transition_l1(0, 0) - trans).abs() / trans < 1e-9);
        assert!((w.reward(1, 1) - rew).abs() / rew < 1e-9);
        assert!((w.delta_t - 0.05 / 360_000.0).abs() < 1e-20);
    }

    #[test]
    fn budget_clipped_at_two() {
        let w = ConfidenceWidths::from_counts(2, 1, &[0, 1_000_000], 100, 0.05);
        assert!(w.transition_l1(0, 0) > 2.0);
        assert_eq!(w.transition_budget(0, 0), 2.0);
        assert!(w.transition_budget(1, 0) < 2.0);
    }

    #[test]
    fn snapshot_serializes() {
        let mut st = stats();
        st.update_counts(g(1, 2), Action(1), 1.0, g(1, 1)).unwrap();
        let json = serde_json::to_value(st.snapshot()).unwrap();
        assert_eq!(json["1"]["2"]["1"]["n"], 1);
        assert_eq!(json["1"]["2"]["1"]["transitions"]["1"], 1);
        assert_eq!(json["0"]["0"]["0"]["n"], 0);
    }

    #[test]
    fn empirical_model_is_admissible() {
        let mut st = stats();
        for i in 0..40_000 {
            let s = i % 2;
            let r = if i % 4 < 2 { 1.0 } else { 0.0 };
            st.update_counts(g(0, s), Action(i % 3 % 2), r, g(0, (i / 2) % 2))
                .unwrap();
        }
        let m = st.model(0).unwrap();
        let w = confidence_widths(m, 40_001, 0.05);
        let mut p = Vec::new();
        let mut r = Vec::new();
        for s in 0..2 {
            for a in 0..2 {
                p.push(m.empirical_transition(s, a));
                r.push(m.mean_reward(s, a));
            }
        }
        let emp = TabularMdp::new(2, 2, r.clone(), p.clone()).unwrap();
        assert!(m.is_admissible(&w, &emp));
        assert!(m.mean_reward(0, 0) + 2.0 * w.reward(0, 0) < 1.0);
        r[0] = m.mean_reward(0, 0) + 2.0 * w.reward(0, 0);
        let off = TabularMdp::new(2, 2, r, p).unwrap();
        assert!(!m.is_admissible(&w, &off));
    }

    proptest! {
        #[test]
        fn widths_monotone(n in 1u64..10_000, t in 1u64..1_000_000, s in 1usize..6, a in 1usize..4) {
            let w1 = ConfidenceWidths::from_counts(1, 1, &[n], t, 0.05);
            let w2 = ConfidenceWidths::from_counts(1, 1, &[n + 1], t, 0.05);
            let w3 = ConfidenceWidths::from_counts(1, 1, &[n], t + 1, 0.05);
            prop_assert!(w2.reward(0, 0) < w1.reward(0, 0));
            prop_assert!(w2.transition_l1(0, 0) < w1.transition_l1(0, 0));
            prop_assert!(w3.reward(0, 0) > w1.reward(0, 0));
            prop_assert!(w3.transition_l1(0, 0) > w1.transition_l1(0, 0));
            let counts = vec![n; s * a];
            let w = ConfidenceWidths::from_counts(s, a, &counts, t, 0.05);
            prop_assert!(w.reward(s - 1, a - 1) > 0.0 && w.transition_l1(0, 0) > 0.0);
        }

        #[test]
        fn replay_is_batch_independent(
            stream in prop::collection::vec((0usize..2, 0usize..2, 0.0f64..1.0, 0usize..2), 0..60),
            split in 0usize..60,
        ) {
            let mut one = stats();
            for &(s, a, r, s2) in &stream {
                one.update_counts(g(0, s), Action(a), r, g(0, s2)).unwrap();
            }
            let split = split.min(stream.len());
            let mut two = stats();
            for chunk in [&stream[..split], &stream[split..]] {
                for &(s, a, r, s2) in chunk {
                    two.update_counts(g(0, s), Action(a), r, g(0, s2)).unwrap();
                }
            }
            prop_assert_eq!(one.snapshot(), two.snapshot());
            let m = one.model(0).unwrap();
            for s in 0..2 {
                for a in 0..2 {
                    let row: u64 = (0..2).map(|s2| m.transition_count(s, a, s2)).sum();
                    prop_assert_eq!(row, m.visits(s, a));
                    prop_assert!(m.reward_sum(s, a) <= m.visits(s, a) as f64);
                }
            }
        }
    }
}
