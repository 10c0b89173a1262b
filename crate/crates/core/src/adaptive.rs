//! Adaptive selection: losses are acquired one query at a time, each
//! candidate's evidence is an e-process, and a candidate is certified as
//! soon as its wealth reaches `m / delta`. Because Ville's inequality holds
//! uniformly over time, the FWER guarantee survives any stopping rule that
//! only looks at the session state.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evidence::{ville_reject, BettingConfig, EProcessState};
use crate::mht::{evalue_fwer, Pipeline, SelectionResult};
use crate::risk::{check_open_unit, CandidateSet};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum PolicyKind {
    /// Round-robin over the candidates still under test.
    Uniform,
    /// Each slot explores a uniformly random open candidate with
    /// probability `epsilon`, otherwise queries the open candidate with the
    /// largest wealth.
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionPolicy {
    pub kind: PolicyKind,
    /// Queries per round; `None` means one per candidate.
    pub queries_per_round: Option<usize>,
}

impl AcquisitionPolicy {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn uniform() -> Self {
        Self { kind: PolicyKind::Uniform, queries_per_round: None }
    }

    pub fn epsilon_greedy(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter { name: "epsilon", value: epsilon, expected: "[0, 1]" });
        }
        Ok(Self { kind: PolicyKind::EpsilonGreedy { epsilon }, queries_per_round: None })
    }

    pub fn with_queries_per_round(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter { name: "queries per round", value: 0.0, expected: ">= 1" });
        }
        self.queries_per_round = Some(k);
        Ok(self)
    }
}

impl Default for AcquisitionPolicy {
    fn default() -> Self {
        Self { kind: PolicyKind::EpsilonGreedy { epsilon: Self::DEFAULT_EPSILON }, queries_per_round: None }
    }
}

/// Stopping conditions measurable on the session state. The session stops
/// when any configured limit is hit or every candidate has been rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StoppingRule {
    pub max_queries: Option<u64>,
    pub max_rounds: Option<u64>,
    pub target_rejections: Option<usize>,
}

impl StoppingRule {
    pub fn budget(queries: u64) -> Self {
        Self { max_queries: Some(queries), ..Self::default() }
    }

    pub fn is_bounded(&self) -> bool {
        self.max_queries.is_some() || self.max_rounds.is_some() || self.target_rejections.is_some()
    }
}

/// One consumed query.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct QueryRecord {
    pub round: u64,
    pub candidate: usize,
    pub loss: f64,
    pub bet: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub consumed: u64,
    pub skipped: u64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveSession {
    candidates: CandidateSet,
    alpha: f64,
    delta: f64,
    states: Vec<EProcessState>,
    query_counts: Vec<u64>,
    rejected: Vec<bool>,
    rejection_order: Vec<usize>,
    consumed: u64,
    rounds: u64,
    cursor: usize,
    /// Outstanding queries of the current round, per candidate.
    pending: Vec<u32>,
    stop: StoppingRule,
    stopped: bool,
    log: Vec<QueryRecord>,
}

impl AdaptiveSession {
    pub fn new(
        candidates: CandidateSet,
        alpha: f64,
        delta: f64,
        betting: BettingConfig,
        stop: StoppingRule,
    ) -> Result<Self> {
        check_open_unit("delta", delta)?;
        if candidates.is_empty() {
            return Err(Error::EmptySample);
        }
        let m = candidates.len();
        let state = EProcessState::new(alpha, betting)?;
        let mut s = Self {
            candidates,
            alpha,
            delta,
            states: vec![state; m],
            query_counts: vec![0; m],
            rejected: vec![false; m],
            rejection_order: Vec::new(),
            consumed: 0,
            rounds: 0,
            cursor: 0,
            pending: vec![0; m],
            stop,
            stopped: false,
            log: Vec::new(),
        };
        s.check_stop();
        Ok(s)
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of hypotheses, fixed at session start.
    pub fn m(&self) -> usize {
        self.candidates.len()
    }

    pub fn state(&self, candidate: usize) -> &EProcessState {
        &self.states[candidate]
    }

    pub fn query_counts(&self) -> &[u64] {
        &self.query_counts
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn is_rejected(&self, candidate: usize) -> bool {
        self.rejected[candidate]
    }

    /// Rejected candidates in rejection order.
    pub fn rejections(&self) -> &[usize] {
        &self.rejection_order
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    /// External stop signal.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    fn open(&self) -> Vec<usize> {
        (0..self.m()).filter(|&c| !self.rejected[c]).collect()
    }

    fn check_stop(&mut self) {
        let s = &self.stop;
        if self.rejection_order.len() == self.m()
            || s.max_queries.is_some_and(|b| self.consumed >= b)
            || s.max_rounds.is_some_and(|r| self.rounds >= r)
            || s.target_rejections.is_some_and(|t| self.rejection_order.len() >= t)
        {
            self.stopped = true;
        }
    }

    /// Query plan for the next round. Rejected candidates never appear. An
    /// empty plan means the session has stopped.
    pub fn plan_round(&mut self, policy: &AcquisitionPolicy, rng_seed: u64) -> Result<Vec<usize>> {
        if self.stopped {
            return Err(Error::SessionStopped);
        }
        self.pending.iter_mut().for_each(|p| *p = 0);
        let open = self.open();
        let mut k = policy.queries_per_round.unwrap_or(self.m());
        if let Some(b) = self.stop.max_queries {
            k = k.min(b.saturating_sub(self.consumed) as usize);
        }
        if open.is_empty() || k == 0 {
            self.stopped = true;
            return Ok(Vec::new());
        }
        let plan: Vec<usize> = match policy.kind {
            PolicyKind::Uniform => {
                let mut plan = Vec::with_capacity(k);
                let m = self.m();
                while plan.len() < k {
                    let c = self.cursor % m;
                    self.cursor = (self.cursor + 1) % m;
                    if !self.rejected[c] {
                        plan.push(c);
                    }
                }
                plan
            }
            PolicyKind::EpsilonGreedy { epsilon } => {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                let best = *open
                    .iter()
                    .max_by(|&&a, &&b| {
                        self.states[a]
                            .log_wealth()
                            .total_cmp(&self.states[b].log_wealth())
                            .then_with(|| self.candidates.id(b).cmp(self.candidates.id(a)))
                    })
                    .expect("open is non-empty");
                (0..k)
                    .map(|_| {
                        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                            open[rng.random_range(0..open.len())]
                        } else {
                            best
                        }
                    })
                    .collect()
            }
        };
        for &c in &plan {
            self.pending[c] += 1;
        }
        Ok(plan)
    }

    /// Whether `candidate` still has an outstanding query this round.
    pub fn is_pending(&self, candidate: usize) -> bool {
        self.pending[candidate] > 0 && !self.rejected[candidate]
    }

    /// Folds one planned observation into the candidate's e-process.
    /// Returns whether the candidate was rejected by this observation.
    pub fn observe(&mut self, candidate: usize, loss: f64) -> Result<bool> {
        if candidate >= self.m() {
            return Err(Error::UnknownCandidate(alloc::format!("#{candidate}")));
        }
        if self.pending[candidate] == 0 || self.rejected[candidate] {
            return Err(Error::UnqueriedObservation(self.candidates.id(candidate).into()));
        }
        let step = self.states[candidate].observe(loss)?;
        self.pending[candidate] -= 1;
        self.query_counts[candidate] += 1;
        self.consumed += 1;
        self.log.push(QueryRecord { round: self.rounds, candidate, loss, bet: step.bet, factor: step.factor });
        let crossed = ville_reject(&self.states[candidate], self.delta, self.m());
        if crossed {
            self.rejected[candidate] = true;
            self.rejection_order.push(candidate);
        }
        Ok(crossed)
    }

    /// Applies a batch of observations for the current plan in order and
    /// closes the round. Observations for a candidate rejected earlier in
    /// the same batch are dropped unconsumed.
    pub fn update(&mut self, observations: &[(usize, f64)]) -> Result<()> {
        let mut remaining = self.pending.clone();
        for &(c, _) in observations {
            if c >= self.m() {
                return Err(Error::UnknownCandidate(alloc::format!("#{c}")));
            }
            if remaining[c] == 0 || self.rejected[c] {
                return Err(Error::UnqueriedObservation(self.candidates.id(c).into()));
            }
            remaining[c] -= 1;
        }
        for &(c, loss) in observations {
            if !self.rejected[c] {
                self.observe(c, loss)?;
            }
        }
        self.finish_round();
        Ok(())
    }

    /// Ingests one externally recorded round, in which the batch itself
    /// is the round's plan. Observations of already-rejected candidates
    /// and anything beyond the query budget are skipped.
    pub fn ingest_batch(&mut self, batch: &[(usize, f64)]) -> Result<IngestSummary> {
        if self.stopped {
            return Err(Error::SessionStopped);
        }
        let mut summary = IngestSummary::default();
        for &(c, loss) in batch {
            if c >= self.m() {
                return Err(Error::UnknownCandidate(alloc::format!("#{c}")));
            }
            let over_budget = self.stop.max_queries.is_some_and(|b| self.consumed >= b);
            if self.rejected[c] || over_budget {
                summary.skipped += 1;
                continue;
            }
            self.pending[c] = 1;
            self.observe(c, loss)?;
            self.pending[c] = 0;
            summary.consumed += 1;
        }
        self.finish_round();
        Ok(summary)
    }

    /// Closes the current round: unanswered queries are discarded.
    pub fn finish_round(&mut self) {
        self.pending.iter_mut().for_each(|p| *p = 0);
        self.rounds += 1;
        self.check_stop();
    }

    /// Current certified selection at FWER level `delta`.
    pub fn selection(&self) -> SelectionResult {
        let states: BTreeMap<String, EProcessState> =
            self.candidates.ids().map(String::from).zip(self.states.iter().copied()).collect();
        evalue_fwer(&states, self.delta).expect("delta validated at construction").with_pipeline(Pipeline::Altt)
    }

    /// Losses observed for each candidate, in order.
    pub fn trajectories(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.m()];
        for r in &self.log {
            out[r.candidate].push(r.loss);
        }
        out
    }

    /// Rebuilds every e-process from the query log and checks it against
    /// the live state (wealth to `rel_tol` relative, log-wealth against the
    /// logged factors) and that every factor is positive.
    pub fn verify_replay(&self, rel_tol: f64) -> bool {
        let mut log_products = vec![0.0f64; self.m()];
        for r in &self.log {
            if r.factor.is_nan() || r.factor <= 0.0 {
                return false;
            }
            log_products[r.candidate] += libm::log(r.factor);
        }
        self.trajectories().iter().enumerate().all(|(c, losses)| {
            let live = &self.states[c];
            let Ok(replayed) = EProcessState::replay(self.alpha, *live.betting(), losses) else {
                return false;
            };
            let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            live.log_wealth().is_finite()
                && replayed.t() == live.t()
                && close(replayed.wealth(), live.wealth())
                && (replayed.log_wealth() - live.log_wealth()).abs() <= rel_tol * live.log_wealth().abs().max(1.0)
                && (log_products[c] - live.log_wealth()).abs() <= rel_tol * live.log_wealth().abs().max(1.0)
        })
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub selection: SelectionResult,
    pub query_counts: Vec<u64>,
    pub rounds: u64,
    pub session: AdaptiveSession,
}

/// Runs plan/observe rounds until the stopping rule fires. `sampler` is
/// called once per planned query, never for a rejected candidate.
#[allow(clippy::too_many_arguments)]
pub fn altt_run<F>(
    mut sampler: F,
    candidates: CandidateSet,
    alpha: f64,
    delta: f64,
    betting: BettingConfig,
    policy: &AcquisitionPolicy,
    stop: StoppingRule,
    rng_seed: u64,
) -> Result<AdaptiveOutcome>
where
    F: FnMut(usize) -> f64,
{
    if !stop.is_bounded() {
        return Err(Error::NoStoppingCondition);
    }
    let mut session = AdaptiveSession::new(candidates, alpha, delta, betting, stop)?;
    while !session.is_stopped() {
        let plan = session.plan_round(policy, seed::derive(rng_seed, session.rounds()))?;
        for c in plan {
            if session.is_pending(c) {
                let loss = sampler(c);
                session.observe(c, loss)?;
            }
        }
        session.finish_round();
    }
    Ok(AdaptiveOutcome {
        selection: session.selection(),
        query_counts: session.query_counts().to_vec(),
        rounds: session.rounds(),
        session,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(m: usize, betting: BettingConfig, stop: StoppingRule) -> AdaptiveSession {
        AdaptiveSession::new(CandidateSet::numbered(m), 0.1, 0.05, betting, stop).unwrap()
    }

    #[test]
    fn pure_exploitation_picks_richest() {
        let b = BettingConfig::constant(0.5).unwrap();
        let mut s = session(2, b, StoppingRule::budget(100));
        let plan = s.plan_round(&AcquisitionPolicy::epsilon_greedy(0.0).unwrap(), 1).unwrap();
        // equal wealth: identifier tie-break
        assert_eq!(plan, vec![0, 0]);
        s.update(&[(0, 1.0), (0, 1.0)]).unwrap();
        let plan = s.plan_round(&AcquisitionPolicy::epsilon_greedy(0.0).unwrap(), 2).unwrap();
        assert_eq!(plan, vec![1, 1]);
    }

    #[test]
    fn uniform_is_round_robin() {
        let mut s = session(3, BettingConfig::default(), StoppingRule::budget(100));
        let p = AcquisitionPolicy::uniform().with_queries_per_round(2).unwrap();
        assert_eq!(s.plan_round(&p, 0).unwrap(), vec![0, 1]);
        s.finish_round();
        assert_eq!(s.plan_round(&p, 0).unwrap(), vec![2, 0]);
    }

    #[test]
    fn crossing_rejects_this_round() {
        // m = 4, delta = 0.05: threshold 80; 1.05^90 > 80 > 1.05^89
        let b = BettingConfig::constant(0.5).unwrap();
        let mut s = AdaptiveSession::new(CandidateSet::numbered(4), 0.1, 0.05, b, StoppingRule::budget(10_000)).unwrap();
        let p = AcquisitionPolicy::epsilon_greedy(0.0).unwrap().with_queries_per_round(1).unwrap();
        let mut rounds = 0;
        while !s.is_rejected(0) {
            assert_eq!(s.plan_round(&p, 0).unwrap(), vec![0]);
            s.update(&[(0, 0.0)]).unwrap();
            rounds += 1;
        }
        assert_eq!(rounds, 90);
        assert!((s.state(0).wealth() - libm::pow(1.05, 90.0)).abs() < 1e-9);
        assert!(s.state(0).wealth() >= 80.0);
        assert_eq!(s.selection().selected, vec!["c0"]);
        // next plan avoids the rejected candidate
        let plan = s.plan_round(&p, 0).unwrap();
        assert_eq!(plan, vec![1]);
        assert!(matches!(s.update(&[(0, 0.0)]), Err(Error::UnqueriedObservation(_))));
    }

    #[test]
    fn wealth_79_crosses_at_82_95() {
        let b = BettingConfig::constant(0.5).unwrap();
        let st = EProcessState::with_wealth(0.1, b, 79.0).unwrap();
        let next = crate::evidence::eprocess_update(&st, 0.0).unwrap();
        assert!((next.wealth() - 82.95).abs() < 1e-12);
        assert!(!ville_reject(&st, 0.05, 4));
        assert!(ville_reject(&next, 0.05, 4));
    }

    #[test]
    fn empty_observations_only_advance_round() {
        let mut s = session(2, BettingConfig::default(), StoppingRule::budget(100));
        s.plan_round(&AcquisitionPolicy::uniform(), 0).unwrap();
        let before = *s.state(0);
        s.update(&[]).unwrap();
        assert_eq!(*s.state(0), before);
        assert_eq!(s.rounds(), 1);
        assert_eq!(s.consumed(), 0);
    }

    #[test]
    fn rejects_unplanned_observations() {
        let mut s = session(3, BettingConfig::default(), StoppingRule::budget(100));
        let p = AcquisitionPolicy::uniform().with_queries_per_round(1).unwrap();
        s.plan_round(&p, 0).unwrap();
        assert!(matches!(s.update(&[(1, 0.0)]), Err(Error::UnqueriedObservation(_))));
        assert!(matches!(s.update(&[(0, 0.0), (0, 0.0)]), Err(Error::UnqueriedObservation(_))));
    }

    #[test]
    fn feed_batches_skip_rejected_candidates() {
        let b = BettingConfig::constant(0.5).unwrap();
        let mut s = AdaptiveSession::new(CandidateSet::numbered(4), 0.1, 0.05, b, StoppingRule::budget(1000)).unwrap();
        let batch: Vec<(usize, f64)> = core::iter::repeat_n((0, 0.0), 95).chain([(1, 0.0)]).collect();
        let summary = s.ingest_batch(&batch).unwrap();
        assert_eq!(summary, IngestSummary { consumed: 91, skipped: 5 });
        assert_eq!(s.query_counts(), &[90, 1, 0, 0]);
        assert!(s.is_rejected(0));
        assert!(s.verify_replay(1e-12));
    }

    #[test]
    fn zero_budget_is_empty() {
        let out = altt_run(
            |_| 0.0,
            CandidateSet::numbered(3),
            0.2,
            0.1,
            BettingConfig::default(),
            &AcquisitionPolicy::default(),
            StoppingRule::budget(0),
            7,
        )
        .unwrap();
        assert!(out.selection.is_empty());
        assert_eq!(out.query_counts, vec![0, 0, 0]);
        let unbounded = altt_run(
            |_| 0.0,
            CandidateSet::numbered(1),
            0.2,
            0.1,
            BettingConfig::default(),
            &AcquisitionPolicy::default(),
            StoppingRule::default(),
            7,
        );
        assert_eq!(unbounded.err(), Some(Error::NoStoppingCondition));
    }

    #[test]
    fn risk_free_candidate_is_found_and_replays() {
        let out = altt_run(
            |_| 0.0,
            CandidateSet::numbered(1),
            0.2,
            0.05,
            BettingConfig::default(),
            &AcquisitionPolicy::default(),
            StoppingRule::budget(10_000),
            1,
        )
        .unwrap();
        assert_eq!(out.selection.selected, vec!["c0"]);
        assert!(out.query_counts[0] < 50);
        assert!(out.session.verify_replay(1e-9));
        assert!(out.session.is_stopped());
    }

    #[test]
    fn target_rejections_stop() {
        let stop = StoppingRule { target_rejections: Some(1), max_queries: Some(100_000), ..Default::default() };
        let out = altt_run(
            |c| if c == 0 { 0.0 } else { 1.0 },
            CandidateSet::numbered(3),
            0.2,
            0.05,
            BettingConfig::default(),
            &AcquisitionPolicy::default(),
            stop,
            2,
        )
        .unwrap();
        assert_eq!(out.selection.selected, vec!["c0"]);
        assert!(out.session.consumed() < 100_000);
    }
}
