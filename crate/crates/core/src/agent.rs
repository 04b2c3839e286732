//! The optimistic model-selection agent.
//!
//! The agent proceeds in episodes made of runs. At the start of every run it
//! solves extended value iteration for every model still in the candidate set,
//! picks the model maximizing `gain - penalty`, and plays that model's
//! optimistic policy. After every step it checks, in order:
//!
//! 1. the reward test: collected reward since the run started must not fall
//!    below `len * rho - lob`; failing it eliminates the model and ends the
//!    episode (the candidate set is restored when it becomes empty);
//! 2. the visit-doubling rule for the pair just played, which ends the episode;
//! 3. the run cap `len == 2^j`, which starts run `j + 1` of the same episode.
//!
//! Every model's statistics are updated with every transition, whatever model
//! is running.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evi::{extended_value_iteration, EviError, OptimisticProblem, OptimisticSolution};
use crate::interaction::{
    Action, GlobalStateId, History, InteractionError, ModelTracker, Observation, RepresentationModel,
};
use crate::statistics::{
    confidence_widths, delta_at, reward_log_term, transition_log_term, StatisticsError, SufficientStatistics,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("agent used before start")]
    NotStarted,
    #[error("agent already started")]
    AlreadyStarted,
    #[error("no candidate models")]
    EmptyCandidates,
    #[error("EVI failed for model {model_id} at t = {t}")]
    Evi {
        model_id: usize,
        t: u64,
        #[source]
        source: EviError,
    },
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// `Phi_0`; model ids must equal their positions.
    pub models: Vec<RepresentationModel>,
    pub delta: f64,
    pub actions: usize,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.models.is_empty() {
            return Err(AgentError::InvalidConfig("empty model set".into()));
        }
        if let Some((i, m)) = self.models.iter().enumerate().find(|(i, m)| m.model_id != *i) {
            return Err(AgentError::InvalidConfig(format!(
                "model at position {i} has id {}",
                m.model_id
            )));
        }
        let alphabet = self.models[0].num_observations();
        if self.models.iter().any(|m| m.num_observations() != alphabet) {
            return Err(AgentError::InvalidConfig(
                "models disagree on the observation alphabet".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(AgentError::InvalidConfig(format!("delta {} not in (0, 1]", self.delta)));
        }
        if self.actions == 0 {
            return Err(AgentError::InvalidConfig("no actions".into()));
        }
        Ok(())
    }
}

/// The constants `c(phi; t)` and `c'(phi; t)` of the selection penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerms {
    pub c: f64,
    pub c_prime: f64,
}

impl PenaltyTerms {
    pub fn new(states: usize, actions: usize, t: u64, delta: f64) -> Self {
        let sa = (states * actions) as f64;
        let c = 2.0 * (2.0 * sa * transition_log_term(states, actions, t, delta)).sqrt()
            + 2.0 * (2.0 * (1.0 / delta_at(delta, t)).ln()).sqrt();
        let c_prime = 2.0 * (2.0 * sa * reward_log_term(states, actions, t, delta)).sqrt();
        Self { c, c_prime }
    }

    /// `2^{-j/2} c sp + 2^{-j/2} c' + 2^{-j} sp`.
    pub fn penalty(&self, run: u32, span: f64) -> f64 {
        let half = (-(run as f64) / 2.0).exp2();
        let full = (-(run as f64)).exp2();
        half * self.c * span + half * self.c_prime + full * span
    }
}

pub fn penalty(states: usize, actions: usize, t: u64, delta: f64, run: u32, span: f64) -> f64 {
    PenaltyTerms::new(states, actions, t, delta).penalty(run, span)
}

/// A solved model competing at a selection point.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub model_id: usize,
    pub solution: OptimisticSolution,
    pub penalty: f64,
}

impl Candidate {
    pub fn score(&self) -> f64 {
        self.solution.gain - self.penalty
    }
}

/// Position of the candidate with the largest penalized gain; ties go to the
/// lowest model id.
pub fn select_model(candidates: &[Candidate]) -> Result<usize, AgentError> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (sb, sc) = (candidates[b].score(), c.score());
                if sc > sb || (sc == sb && c.model_id < candidates[b].model_id) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(AgentError::EmptyCandidates)
}

/// Bookkeeping for the active run `j` of episode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub episode: u64,
    pub run: u32,
    pub start: u64,
    pub model_id: usize,
    pub rho: f64,
    pub policy: Vec<usize>,
    pub span_plus: f64,
    pub states: usize,
    pub actions: usize,
    /// `v_{k,j}(s, a)`.
    pub visits: Vec<u64>,
    pub length: u64,
    pub reward_sum: f64,
    reward_log: f64,
    transition_log: f64,
    confidence_log: f64,
}

impl RunState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        episode: u64,
        run: u32,
        start: u64,
        model_id: usize,
        rho: f64,
        policy: Vec<usize>,
        span_plus: f64,
        states: usize,
        actions: usize,
        delta: f64,
    ) -> Self {
        Self {
            episode,
            run,
            start,
            model_id,
            rho,
            policy,
            span_plus,
            states,
            actions,
            visits: vec![0; states * actions],
            length: 0,
            reward_sum: 0.0,
            reward_log: reward_log_term(states, actions, start, delta),
            transition_log: transition_log_term(states, actions, start, delta),
            confidence_log: (1.0 / delta_at(delta, start)).ln(),
        }
    }

    /// `2^j`.
    pub fn cap(&self) -> u64 {
        1u64 << self.run
    }

    pub fn record(&mut self, s: usize, a: usize, r: f64) {
        self.visits[s * self.actions + a] += 1;
        self.length += 1;
        self.reward_sum += r;
    }

    /// Allowed shortfall at time `t >= start`, with `len = t - start + 1`.
    pub fn lob(&self, t: u64) -> f64 {
        let len = (t + 1).saturating_sub(self.start) as f64;
        let root_visits: f64 = self.visits.iter().map(|&v| (v as f64).sqrt()).sum();
        let sp = self.span_plus;
        2.0 * (2.0 * self.reward_log).sqrt() * root_visits
            + 2.0 * sp * (2.0 * self.transition_log).sqrt() * root_visits
            + 2.0 * sp * (2.0 * len * self.confidence_log).sqrt()
            + sp
    }

    /// `reward_sum - (len * rho - lob)`; negative means the test fails.
    pub fn test_margin(&self, t: u64) -> f64 {
        let len = (t + 1).saturating_sub(self.start) as f64;
        self.reward_sum - (len * self.rho - self.lob(t))
    }

    pub fn reward_test(&self, t: u64) -> bool {
        self.test_margin(t) >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    VisitDoubling,
    TestFailed { eliminated: usize, reset: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlDecision {
    ContinueRun,
    EndRunStartNextRun,
    EndEpisode(EpisodeEnd),
}

impl ControlDecision {
    /// Event label used in traces.
    pub fn event(&self) -> &'static str {
        match self {
            ControlDecision::ContinueRun => "none",
            ControlDecision::EndRunStartNextRun => "run_end",
            ControlDecision::EndEpisode(EpisodeEnd::VisitDoubling) => "episode_end_doubling",
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed { reset: false, .. }) => "episode_end_testfail",
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed { reset: true, .. }) => "phi_reset",
        }
    }
}

/// One agent step as seen by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub k: u64,
    pub j: u32,
    pub model_id: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub rho_kj: f64,
    pub lob: f64,
    pub test_margin: f64,
    pub decision: ControlDecision,
}

/// One environment transition as seen through every model.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub action: Action,
    pub reward: f64,
    pub from: Vec<GlobalStateId>,
    pub to: Vec<GlobalStateId>,
}

#[derive(Debug, Clone)]
struct EpisodeState {
    index: u64,
    /// `max(N_{t_k}(s, a), 1)` per model.
    counts_at_start: Vec<Vec<u64>>,
    /// `v_k(s, a)` per model.
    visits: Vec<Vec<u64>>,
}

/// Summary counters of an agent's lifetime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentCounters {
    pub episodes: u64,
    pub runs: u64,
    pub eliminations: Vec<u64>,
    pub resets: u64,
    /// Longest completed run per run index, for invariant checks.
    pub longest_run_by_index: Vec<u64>,
}

pub struct OmsAgent {
    config: AgentConfig,
    active: Vec<bool>,
    stats: SufficientStatistics,
    trackers: Vec<ModelTracker>,
    history: Option<History>,
    keep_history: bool,
    t: u64,
    episode: Option<EpisodeState>,
    run: Option<RunState>,
    counters: AgentCounters,
    last_candidates: Vec<Candidate>,
}

impl OmsAgent {
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let n = config.models.len();
        Ok(Self {
            stats: SufficientStatistics::new(&config.models, config.actions),
            active: vec![true; n],
            trackers: Vec::new(),
            history: None,
            keep_history: false,
            t: 1,
            episode: None,
            run: None,
            counters: AgentCounters {
                eliminations: vec![0; n],
                ..Default::default()
            },
            last_candidates: Vec::new(),
            config,
        })
    }

    /// Keep the full interaction history (off by default).
    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn statistics(&self) -> &SufficientStatistics {
        &self.stats
    }

    pub fn history(&self) -> Option<&History> {
        self.history.as_ref()
    }

    /// Current time `t`.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn run_state(&self) -> Option<&RunState> {
        self.run.as_ref()
    }

    pub fn counters(&self) -> &AgentCounters {
        &self.counters
    }

    pub fn candidate_set(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    /// Candidates solved at the most recent selection point.
    pub fn last_candidates(&self) -> &[Candidate] {
        &self.last_candidates
    }

    /// Current state of every model.
    pub fn current_states(&self) -> Vec<GlobalStateId> {
        self.config
            .models
            .iter()
            .zip(&self.trackers)
            .map(|(m, tr)| m.state_of(tr))
            .collect()
    }

    /// Begin interacting from the initial observation; returns `a_1`.
    pub fn start(&mut self, initial: Observation) -> Result<Action, AgentError> {
        if self.episode.is_some() {
            return Err(AgentError::AlreadyStarted);
        }
        self.check_observation(initial)?;
        self.trackers = self.config.models.iter().map(|m| m.tracker(initial)).collect();
        if self.keep_history {
            self.history = Some(History::new(initial));
        }
        self.begin_episode();
        self.begin_run(1)?;
        self.current_action()
    }

    fn check_observation(&self, o: Observation) -> Result<(), AgentError> {
        let num_observations = self.config.models[0].num_observations();
        if o.0 >= num_observations {
            return Err(InteractionError::ObservationOutOfRange {
                observation: o.0,
                num_observations,
            }
            .into());
        }
        Ok(())
    }

    /// `pi_{k,j}(s_t)` under the running model.
    pub fn current_action(&self) -> Result<Action, AgentError> {
        let run = self.run.as_ref().ok_or(AgentError::NotStarted)?;
        let s = self.config.models[run.model_id].state_of(&self.trackers[run.model_id]);
        Ok(Action(run.policy[s.local_state]))
    }

    /// Feed back `(r_t, o_{t+1})` for the action just taken; returns the
    /// step record and `a_{t+1}`.
    pub fn observe(&mut self, reward: f64, next: Observation) -> Result<(StepRecord, Action), AgentError> {
        let action = self.current_action()?;
        if !(0.0..=1.0).contains(&reward) {
            return Err(InteractionError::RewardOutOfRange(reward).into());
        }
        self.check_observation(next)?;
        let from = self.current_states();
        for (m, tr) in self.config.models.iter().zip(self.trackers.iter_mut()) {
            m.advance(tr, next);
        }
        let to = self.current_states();
        for (s, s2) in from.iter().zip(&to) {
            self.stats.update_counts(*s, action, reward, *s2)?;
        }
        if let Some(h) = self.history.as_mut() {
            h.push(action, reward, next);
        }
        let record = self.advance(&Transition {
            action,
            reward,
            from,
            to,
        })?;
        match record.decision {
            ControlDecision::ContinueRun => {}
            ControlDecision::EndRunStartNextRun => {
                let j = record.j + 1;
                self.begin_run(j)?;
            }
            ControlDecision::EndEpisode(_) => {
                self.begin_episode();
                self.begin_run(1)?;
            }
        }
        Ok((record, self.current_action()?))
    }

    /// Run and episode control for one step whose transition has already been
    /// counted in the statistics. Advances `t`.
    pub fn advance(&mut self, transition: &Transition) -> Result<StepRecord, AgentError> {
        let t = self.t;
        let run = self.run.as_mut().ok_or(AgentError::NotStarted)?;
        let episode = self.episode.as_mut().ok_or(AgentError::NotStarted)?;
        let m = run.model_id;
        let s = transition.from[m].local_state;
        let a = transition.action.0;
        run.record(s, a, transition.reward);
        let pair = s * run.actions + a;
        episode.visits[m][pair] += 1;

        let lob = run.lob(t);
        let test_margin = run.test_margin(t);
        let decision = if test_margin < 0.0 {
            self.active[m] = false;
            self.counters.eliminations[m] += 1;
            let reset = !self.active.iter().any(|&x| x);
            if reset {
                self.active.iter_mut().for_each(|x| *x = true);
                self.counters.resets += 1;
            }
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed { eliminated: m, reset })
        } else if episode.visits[m][pair] == episode.counts_at_start[m][pair] {
            ControlDecision::EndEpisode(EpisodeEnd::VisitDoubling)
        } else if run.length == run.cap() {
            ControlDecision::EndRunStartNextRun
        } else {
            ControlDecision::ContinueRun
        };
        let record = StepRecord {
            t,
            k: run.episode,
            j: run.run,
            model_id: m,
            s,
            a,
            r: transition.reward,
            rho_kj: run.rho,
            lob,
            test_margin,
            decision,
        };
        if decision != ControlDecision::ContinueRun {
            let idx = run.run as usize;
            if self.counters.longest_run_by_index.len() <= idx {
                self.counters.longest_run_by_index.resize(idx + 1, 0);
            }
            let slot = &mut self.counters.longest_run_by_index[idx];
            *slot = (*slot).max(run.length);
            self.counters.runs += 1;
            if matches!(decision, ControlDecision::EndEpisode(_)) {
                self.counters.episodes += 1;
            }
        }
        self.t += 1;
        Ok(record)
    }

    fn begin_episode(&mut self) {
        let index = self.episode.as_ref().map_or(1, |e| e.index + 1);
        self.episode = Some(EpisodeState {
            index,
            counts_at_start: self.stats.models().iter().map(|m| m.effective_visit_table()).collect(),
            visits: self
                .stats
                .models()
                .iter()
                .map(|m| vec![0; m.states * m.actions])
                .collect(),
        });
    }

    /// Solve every candidate at the current time and start run `j`.
    fn begin_run(&mut self, j: u32) -> Result<(), AgentError> {
        let t = self.t;
        let delta = self.config.delta;
        let precision = 1.0 / (t as f64).sqrt();
        let mut candidates = Vec::new();
        for model_id in self.candidate_set() {
            let stats = self.stats.model(model_id)?;
            let widths = confidence_widths(stats, t, delta);
            let problem = OptimisticProblem::from_statistics(stats, &widths);
            let solution = extended_value_iteration(&problem, precision).map_err(|source| AgentError::Evi {
                model_id,
                t,
                source,
            })?;
            let penalty = penalty(stats.states, stats.actions, t, delta, j, solution.span);
            candidates.push(Candidate {
                model_id,
                solution,
                penalty,
            });
        }
        let chosen = &candidates[select_model(&candidates)?];
        let episode = self.episode.as_ref().ok_or(AgentError::NotStarted)?.index;
        let states = self.config.models[chosen.model_id].state_count();
        self.run = Some(RunState::new(
            episode,
            j,
            t,
            chosen.model_id,
            chosen.solution.gain,
            chosen.solution.policy.clone(),
            chosen.solution.span,
            states,
            self.config.actions,
            delta,
        ));
        self.last_candidates = candidates;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evi::OptimisticSolution;

    fn candidate(model_id: usize, gain: f64, penalty: f64) -> Candidate {
        Candidate {
            model_id,
            solution: OptimisticSolution {
                values: vec![0.0],
                policy: vec![0],
                gain,
                optimistic_rewards: vec![gain],
                optimistic_transitions: vec![vec![1.0]],
                span: 0.0,
                sweeps: 1,
            },
            penalty,
        }
    }

    #[test]
    fn penalty_with_injected_constants() {
        let terms = PenaltyTerms { c: 10.0, c_prime: 5.0 };
        assert!((terms.penalty(2, 1.0) - 7.75).abs() < 1e-15);
        assert!((terms.penalty(3, 0.0) - 5.0 * 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn penalty_golden() {
        // c, c' and pen evaluated independently at 30 digits.
        let terms = PenaltyTerms::new(2, 2, 10, 0.05);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(terms.c, 32.269_382_156_688_24) < 1e-9);
        assert!(rel(terms.c_prime, 22.318_744_074_107_45) < 1e-9);
        assert!(rel(penalty(2, 2, 10, 0.05, 1, 2.0), 62.417_533_177_757_31) < 1e-9);
    }

    #[test]
    fn penalty_vanishes_with_run_index() {
        let terms = PenaltyTerms::new(3, 2, 1000, 0.05);
        let mut prev = f64::INFINITY;
        for j in 1..60 {
            let p = terms.penalty(j, 1.5);
            assert!(p > 0.0 && p < prev);
            prev = p;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn selection_rules() {
        let c = vec![candidate(0, 0.8, 0.0), candidate(1, 0.5, 0.0)];
        assert_eq!(select_model(&c).unwrap(), 0);
        let c = vec![candidate(1, 0.75, 0.25), candidate(0, 0.625, 0.125)];
        assert_eq!(c[select_model(&c).unwrap()].model_id, 0);
        assert!(matches!(select_model(&[]), Err(AgentError::EmptyCandidates)));
    }

    #[test]
    fn lob_golden() {
        let mut run = RunState::new(1, 1, 10, 0, 1.0, vec![0, 0], 2.0, 2, 2, 0.05);
        run.record(0, 1, 0.0);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(run.lob(10), 54.887_896_395_019_28) < 1e-9);
        // Span zero leaves only the reward term.
        let mut flat = RunState::new(1, 1, 10, 0, 1.0, vec![0, 0], 0.0, 2, 2, 0.05);
        flat.record(0, 1, 0.0);
        assert!(rel(flat.lob(10), 11.159_372_037_053_724) < 1e-9);
    }

    #[test]
    fn lob_root_homogeneity() {
        let mut a = RunState::new(1, 3, 50, 0, 0.5, vec![0; 3], 1.3, 3, 2, 0.05);
        let mut b = a.clone();
        for (i, n) in [3u64, 1, 4, 1, 5, 9].iter().enumerate() {
            for _ in 0..*n {
                a.record(i / 2, i % 2, 0.0);
            }
            for _ in 0..2 * n {
                b.record(i / 2, i % 2, 0.0);
            }
        }
        // Zero span isolates terms (i) and (ii) from the length term.
        a.span_plus = 0.0;
        b.span_plus = 0.0;
        let t = 70;
        assert!((b.lob(t) / a.lob(t) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reward_test_examples() {
        let mut run = RunState::new(1, 30, 1, 0, 1.0, vec![0], 0.0, 1, 1, 0.05);
        for t in 1..=500 {
            run.record(0, 0, 1.0);
            assert!(run.reward_test(t));
        }
        let mut run = RunState::new(1, 30, 1, 0, 1.0, vec![0], 0.0, 1, 1, 0.05);
        let mut failed = None;
        for t in 1..=100_000 {
            run.record(0, 0, 0.0);
            if !run.reward_test(t) {
                failed = Some(t);
                break;
            }
        }
        let t = failed.expect("zero rewards must eventually fail");
        assert!(run.length as f64 > run.lob(t));
    }

    #[test]
    fn overstated_gain_fails_when_predicted() {
        // One state, one action, reward 0.5 per step, selected gain 1.0.
        // With zero span the test fails at the first len with 0.5 len > lob(len),
        // where lob(len) = 2 sqrt(2 len L) and L = ln(2 * 1 * 1 * t0 / delta_t0).
        let (t0, delta) = (5u64, 0.05);
        let delta_t0 = delta / (36.0 * 25.0);
        let log_term = (2.0 * t0 as f64 / delta_t0).ln();
        // 0.5 len > 2 sqrt(2 len L)  <=>  len > 32 L.
        let expected = (32.0 * log_term).floor() as u64 + 1;
        let mut run = RunState::new(1, 40, t0, 0, 1.0, vec![0], 0.0, 1, 1, delta);
        let mut t = t0;
        loop {
            run.record(0, 0, 0.5);
            if !run.reward_test(t) {
                break;
            }
            t += 1;
        }
        assert_eq!(run.length, expected);
    }

    #[test]
    fn config_validation() {
        let m = RepresentationModel::identity(0, 2).unwrap();
        let bad_id = RepresentationModel::identity(1, 2).unwrap();
        let ok = AgentConfig {
            models: vec![m.clone()],
            delta: 0.05,
            actions: 2,
        };
        assert!(ok.validate().is_ok());
        for bad in [
            AgentConfig {
                models: vec![],
                ..ok.clone()
            },
            AgentConfig {
                models: vec![bad_id],
                ..ok.clone()
            },
            AgentConfig {
                delta: 0.0,
                ..ok.clone()
            },
            AgentConfig {
                delta: 1.5,
                ..ok.clone()
            },
            AgentConfig {
                actions: 0,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(AgentError::InvalidConfig(_))));
        }
    }

    fn two_state_agent() -> OmsAgent {
        let models = vec![RepresentationModel::identity(0, 2).unwrap()];
        OmsAgent::new(AgentConfig {
            models,
            delta: 0.05,
            actions: 2,
        })
        .unwrap()
    }

    #[test]
    fn first_run_is_capped_at_two_and_fresh_pair_doubles() {
        let mut agent = two_state_agent();
        agent.start(Observation(0)).unwrap();
        let run = agent.run_state().unwrap();
        assert_eq!((run.episode, run.run, run.start, run.cap()), (1, 1, 1, 2));
        // First visit of an unvisited pair matches its effective count of one.
        let (rec, _) = agent.observe(0.0, Observation(0)).unwrap();
        assert_eq!(rec.decision, ControlDecision::EndEpisode(EpisodeEnd::VisitDoubling));
        assert_eq!(agent.run_state().unwrap().episode, 2);
        assert_eq!(agent.time(), 2);
    }

    #[test]
    fn run_cap_starts_next_run() {
        let mut agent = two_state_agent();
        agent.start(Observation(0)).unwrap();
        // Pre-load counts so doubling cannot trigger early.
        let st = &mut agent.stats;
        for _ in 0..1000 {
            for s in 0..2 {
                for a in 0..2 {
                    let g = |l| GlobalStateId {
                        model_id: 0,
                        local_state: l,
                    };
                    st.update_counts(g(s), Action(a), 0.5, g(s)).unwrap();
                }
            }
        }
        agent.begin_episode();
        agent.begin_run(1).unwrap();
        let (r1, _) = agent.observe(0.5, Observation(0)).unwrap();
        assert_eq!(r1.decision, ControlDecision::ContinueRun);
        let (r2, _) = agent.observe(0.5, Observation(0)).unwrap();
        assert_eq!(r2.decision, ControlDecision::EndRunStartNextRun);
        let run = agent.run_state().unwrap();
        assert_eq!((run.run, run.start, run.cap()), (2, 3, 4));
    }

    #[test]
    fn elimination_of_only_model_resets() {
        let mut agent = two_state_agent();
        agent.start(Observation(0)).unwrap();
        let run = agent.run.as_mut().unwrap();
        run.rho = 1e9;
        let (rec, _) = agent.observe(0.0, Observation(1)).unwrap();
        assert_eq!(
            rec.decision,
            ControlDecision::EndEpisode(EpisodeEnd::TestFailed {
                eliminated: 0,
                reset: true
            })
        );
        assert_eq!(rec.decision.event(), "phi_reset");
        assert_eq!(agent.candidate_set(), vec![0]);
        assert_eq!(agent.counters().eliminations, vec![1]);
        assert_eq!(agent.run_state().unwrap().episode, 2);
    }

    #[test]
    fn observing_before_start_fails() {
        let mut agent = two_state_agent();
        assert!(matches!(
            agent.observe(0.0, Observation(0)),
            Err(AgentError::NotStarted)
        ));
        agent.start(Observation(0)).unwrap();
        assert!(matches!(agent.start(Observation(0)), Err(AgentError::AlreadyStarted)));
    }
}
