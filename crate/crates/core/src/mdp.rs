//! Finite MDPs with mean rewards in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row ({state}, {action}) is not a distribution (sum {sum})")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("reward {reward} at ({state}, {action}) outside [0, 1]")]
    Reward { state: usize, action: usize, reward: f64 },
    #[error("MDP is not weakly communicating")]
    NotWeaklyCommunicating,
    #[error("MDP is not communicating")]
    NotCommunicating,
    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
}

const ROW_TOLERANCE: f64 = 1e-12;

/// `r(s, a)` and `p(. | s, a)`, stored row-major by `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

impl TabularMdp {
    /// Rows are indexed `s * actions + a`.
    pub fn new(states: usize, actions: usize, rewards: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        if states == 0 || actions == 0 {
            return Err(MdpError::Shape("need at least one state and one action".into()));
        }
        if rewards.len() != states * actions || transitions.len() != states * actions {
            return Err(MdpError::Shape(format!(
                "expected {} rows, got {} rewards and {} transition rows",
                states * actions,
                rewards.len(),
                transitions.len()
            )));
        }
        for (i, (row, &r)) in transitions.iter().zip(&rewards).enumerate() {
            let (state, action) = (i / actions, i % actions);
            if row.len() != states {
                return Err(MdpError::Shape(format!("row {i} has {} entries", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(MdpError::NotStochastic { state, action, sum });
            }
            if !(0.0..=1.0).contains(&r) {
                return Err(MdpError::Reward {
                    state,
                    action,
                    reward: r,
                });
            }
        }
        Ok(Self {
            states,
            actions,
            rewards,
            transitions,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s * self.actions + a]
    }

    /// Relabel states: state `s` of `self` becomes `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, MdpError> {
        let n = self.states;
        if perm.len() != n {
            return Err(MdpError::Shape("permutation length".into()));
        }
        let mut rewards = vec![0.0; n * self.actions];
        let mut transitions = vec![vec![0.0; n]; n * self.actions];
        for s in 0..n {
            for a in 0..self.actions {
                let dst = perm[s] * self.actions + a;
                rewards[dst] = self.reward(s, a);
                for (s2, &p) in self.transition_row(s, a).iter().enumerate() {
                    transitions[dst][perm[s2]] = p;
                }
            }
        }
        Self::new(n, self.actions, rewards, transitions)
    }

    fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.transition_row(s, a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s2, _)| s2)
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.states];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(s) = stack.pop() {
            for a in 0..self.actions {
                for s2 in self.successors(s, a) {
                    if !seen[s2] {
                        seen[s2] = true;
                        stack.push(s2);
                    }
                }
            }
        }
        seen
    }

    /// Every state reaches every other state under some action sequence.
    pub fn is_communicating(&self) -> bool {
        (0..self.states).all(|s| self.reachable_from(s).iter().all(|&r| r))
    }

    /// One closed communicating class, with every other state transient under
    /// every stationary policy.
    pub fn is_weakly_communicating(&self) -> bool {
        let reach: Vec<Vec<bool>> = (0..self.states).map(|s| self.reachable_from(s)).collect();
        // Closed class of the union graph: states that can reach back every state they reach.
        let in_sink = |s: usize| (0..self.states).all(|x| !reach[s][x] || reach[x][s]);
        let sinks: Vec<usize> = (0..self.states).filter(|&s| in_sink(s)).collect();
        let Some(&root) = sinks.first() else {
            return false;
        };
        if sinks.iter().any(|&s| !reach[root][s]) {
            return false;
        }
        let mut outside: Vec<bool> = (0..self.states).map(|s| !reach[root][s]).collect();
        // Prune states that cannot be kept inside the outside set by any action.
        loop {
            let mut changed = false;
            for s in 0..self.states {
                if outside[s] && !(0..self.actions).any(|a| self.successors(s, a).all(|s2| outside[s2])) {
                    outside[s] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        !outside.iter().any(|&o| o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            TabularMdp::new(2, 1, vec![0.0, 0.0], vec![vec![0.5, 0.4], vec![1.0, 0.0]]),
            Err(MdpError::NotStochastic { state: 0, .. })
        ));
        assert!(matches!(
            TabularMdp::new(1, 1, vec![1.5], vec![vec![1.0]]),
            Err(MdpError::Reward { .. })
        ));
        assert!(TabularMdp::new(1, 1, vec![0.5], vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn communication_classes() {
        // 0 <-> 1, both reachable.
        let m = TabularMdp::new(2, 1, vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(m.is_communicating());
        assert!(m.is_weakly_communicating());

        // 0 -> 1 absorbing: weakly communicating, not communicating.
        let m = TabularMdp::new(2, 1, vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(!m.is_communicating());
        assert!(m.is_weakly_communicating());

        // 0 may self-loop forever or leave to absorbing 1: two recurrent classes.
        let m = TabularMdp::new(
            2,
            2,
            vec![0.0, 0.0, 1.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert!(!m.is_weakly_communicating());

        // Two disjoint absorbing states.
        let m = TabularMdp::new(2, 1, vec![0.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(!m.is_weakly_communicating());
    }
}
