//! Exact reference quantities for a known MDP: optimal gain, diameter, and
//! brute-force enumeration over deterministic stationary policies.

use nalgebra::{DMatrix, DVector};

use crate::mdp::{MdpError, TabularMdp};

/// Sweep cap for the value-iteration oracles.
pub const ORACLE_SWEEP_CAP: usize = 10_000_000;

/// Self-loop weight mixed into every row by [`optimal_gain`]. Lazy chains
/// share the original's stationary distributions, so gains are unchanged,
/// while periodic dynamics no longer stall relative value iteration.
const LAZINESS: f64 = 0.5;

/// Optimal average reward by relative value iteration on the true model.
///
/// Stops when the span of successive differences drops below `precision`
/// and returns the midpoint of the final difference range, which is within
/// `precision` of the optimal gain.
pub fn optimal_gain(mdp: &TabularMdp, precision: f64) -> Result<f64, MdpError> {
    if !mdp.is_weakly_communicating() {
        return Err(MdpError::NotWeaklyCommunicating);
    }
    let n = mdp.states();
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..ORACLE_SWEEP_CAP {
        for s in 0..n {
            next[s] = (0..mdp.actions())
                .map(|a| {
                    let ev: f64 = mdp.transition_row(s, a).iter().zip(&u).map(|(p, v)| p * v).sum();
                    mdp.reward(s, a) + LAZINESS * ev + (1.0 - LAZINESS) * u[s]
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let (lo, hi) = next
            .iter()
            .zip(&u)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if hi - lo < precision {
            return Ok(0.5 * (lo + hi));
        }
        let base = next[0];
        for (ui, ni) in u.iter_mut().zip(&next) {
            *ui = ni - base;
        }
    }
    Err(MdpError::NoConvergence(ORACLE_SWEEP_CAP))
}

/// Minimal expected hitting times `h(s)` into `target` (with `h(target) = 0`).
pub fn hitting_times(mdp: &TabularMdp, target: usize, precision: f64) -> Result<Vec<f64>, MdpError> {
    let n = mdp.states();
    let mut h = vec![0.0; n];
    for _ in 0..ORACLE_SWEEP_CAP {
        let mut change: f64 = 0.0;
        for s in 0..n {
            if s == target {
                continue;
            }
            let best = (0..mdp.actions())
                .map(|a| 1.0 + mdp.transition_row(s, a).iter().zip(&h).map(|(p, v)| p * v).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            change = change.max((best - h[s]).abs());
            h[s] = best;
        }
        if change < precision {
            return Ok(h);
        }
    }
    Err(MdpError::NoConvergence(ORACLE_SWEEP_CAP))
}

/// Largest minimal expected travel time between two distinct states.
pub fn diameter(mdp: &TabularMdp, precision: f64) -> Result<f64, MdpError> {
    if !mdp.is_communicating() {
        return Err(MdpError::NotCommunicating);
    }
    let mut d: f64 = 0.0;
    for target in 0..mdp.states() {
        let h = hitting_times(mdp, target, precision)?;
        d = d.max(h.iter().copied().fold(0.0, f64::max));
    }
    Ok(d)
}

/// Stationary distribution of the irreducible chain `p` restricted to `class`.
fn stationary(p: &[Vec<f64>], class: &[usize]) -> Vec<f64> {
    let m = class.len();
    // Solve mu (P - I) = 0 with the last balance equation replaced by sum(mu) = 1.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            a[(j, i)] = p[si][sj] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        a[(m - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&b)
        .expect("irreducible class has a unique stationary distribution");
    mu.iter().copied().collect()
}

/// Closed communicating classes of a Markov chain.
fn recurrent_classes(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = p.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                for (s2, &q) in p[s].iter().enumerate() {
                    if q > 0.0 && !seen[s2] {
                        seen[s2] = true;
                        stack.push(s2);
                    }
                }
            }
            seen
        })
        .collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for s in 0..n {
        if assigned[s] {
            continue;
        }
        let closed = (0..n).all(|x| !reach[s][x] || reach[x][s]);
        if closed {
            let class: Vec<usize> = (0..n).filter(|&x| reach[s][x]).collect();
            for &x in &class {
                assigned[x] = true;
            }
            classes.push(class);
        }
    }
    classes
}

/// Gains of the recurrent classes of a deterministic policy, as
/// `(class, gain)` pairs.
pub fn policy_class_gains(mdp: &TabularMdp, policy: &[usize]) -> Vec<(Vec<usize>, f64)> {
    let p: Vec<Vec<f64>> = (0..mdp.states())
        .map(|s| mdp.transition_row(s, policy[s]).to_vec())
        .collect();
    recurrent_classes(&p)
        .into_iter()
        .map(|class| {
            let mu = stationary(&p, &class);
            let g = class.iter().zip(&mu).map(|(&s, m)| m * mdp.reward(s, policy[s])).sum();
            (class, g)
        })
        .collect()
}

/// Optimal gain by enumerating all `A^S` deterministic stationary policies.
///
/// For a weakly communicating MDP the optimal gain equals the best gain of
/// any recurrent class of any deterministic policy.
pub fn enumerate_optimal_gain(mdp: &TabularMdp) -> (f64, Vec<usize>) {
    let (n, k) = (mdp.states(), mdp.actions());
    let mut policy = vec![0; n];
    let mut best = (f64::NEG_INFINITY, policy.clone());
    loop {
        for (_, g) in policy_class_gains(mdp, &policy) {
            if g > best.0 {
                best = (g, policy.clone());
            }
        }
        // Odometer increment.
        let mut i = 0;
        while i < n {
            policy[i] += 1;
            if policy[i] < k {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_chain() -> TabularMdp {
        // Actions: 0 = left, 1 = right. Reward 1 only for staying right.
        TabularMdp::new(
            2,
            2,
            vec![0.0, 0.0, 0.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_gain_and_diameter() {
        let m = two_state_chain();
        assert!((optimal_gain(&m, 1e-10).unwrap() - 1.0).abs() < 1e-9);
        assert!((diameter(&m, 1e-9).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bandit_gain() {
        let m = TabularMdp::new(1, 2, vec![0.2, 0.7], vec![vec![1.0], vec![1.0]]).unwrap();
        assert!((optimal_gain(&m, 1e-12).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(enumerate_optimal_gain(&m).1, vec![1]);
    }

    #[test]
    fn cycle_diameter() {
        let n = 5;
        let rows = (0..n)
            .map(|s| {
                let mut r = vec![0.0; n];
                r[(s + 1) % n] = 1.0;
                r
            })
            .collect();
        let m = TabularMdp::new(n, 1, vec![0.5; n], rows).unwrap();
        assert!((diameter(&m, 1e-9).unwrap() - (n as f64 - 1.0)).abs() < 1e-9);
        // Periodic chain; the lazy transform still converges.
        assert!((optimal_gain(&m, 1e-10).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn geometric_hitting_time() {
        for q in [0.5, 0.1] {
            let m = TabularMdp::new(2, 1, vec![0.0, 0.0], vec![vec![1.0 - q, q], vec![q, 1.0 - q]]).unwrap();
            assert!((diameter(&m, 1e-9).unwrap() - 1.0 / q).abs() < 1e-6);
        }
    }

    #[test]
    fn non_communicating_rejected() {
        let m = TabularMdp::new(2, 1, vec![0.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(diameter(&m, 1e-9), Err(MdpError::NotCommunicating));
        assert_eq!(optimal_gain(&m, 1e-9), Err(MdpError::NotWeaklyCommunicating));
    }

    #[test]
    fn multichain_policy_classes() {
        let m = TabularMdp::new(2, 1, vec![0.3, 0.9], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let classes = policy_class_gains(&m, &[0, 0]);
        assert_eq!(classes.len(), 2);
        assert!((classes[1].1 - 0.9).abs() < 1e-12);
    }
}
