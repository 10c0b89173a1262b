//! Candidates, calibration losses, risk specifications and empirical risk
//! statistics.
//!
//! Losses must lie in `[0, 1]`. Unbounded losses have to be rescaled by the
//! caller before ingestion; the Hoeffding and binomial p-values are only
//! valid for bounded losses.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Slack used when turning a real-valued rank such as `q * n` into an
/// integer, so that `0.7 * 10` is treated as 7 and not 7.000000000000001.
const RANK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    pub id: String,
    /// The hyperparameter setting itself. Never interpreted here.
    pub descriptor: String,
}

/// Ordered set of candidate configurations with unique, non-empty ids.
///
/// The position of a candidate is its index everywhere else in the crate
/// (loss tables, p-value vectors, e-process sessions).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &candidates {
            if c.id.is_empty() {
                return Err(Error::EmptyCandidateId);
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateCandidate(c.id.clone()));
            }
        }
        Ok(Self { candidates })
    }

    /// Candidates with the given ids and empty descriptors.
    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            ids.into_iter()
                .map(|id| Candidate { id: id.into(), descriptor: String::new() })
                .collect(),
        )
    }

    /// Ids `c0, c1, ...`; handy for synthetic scenarios.
    pub fn numbered(m: usize) -> Self {
        Self::from_ids((0..m).map(|i| alloc::format!("c{i}"))).expect("numbered ids are unique")
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Candidate> {
        self.candidates.get(index)
    }

    pub fn id(&self, index: usize) -> &str {
        &self.candidates[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.id.as_str())
    }

    /// Sub-set in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self { candidates: indices.iter().map(|&i| self.candidates[i].clone()).collect() }
    }
}

/// Dense table of instantaneous losses indexed by (sample, candidate,
/// objective).
///
/// Storage is candidate-major so that the losses of one candidate on one
/// objective form a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    n_samples: usize,
    n_candidates: usize,
    n_objectives: usize,
    values: Vec<f64>,
}

impl LossTable {
    /// Builds a table from `values` laid out as
    /// `values[(candidate * n_objectives + objective) * n_samples + sample]`.
    pub fn from_candidate_major(
        n_samples: usize,
        n_candidates: usize,
        n_objectives: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = n_samples * n_candidates * n_objectives;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "loss table cells",
                expected,
                found: values.len(),
            });
        }
        if n_objectives == 0 {
            return Err(Error::InvalidProblem("loss table needs at least one objective"));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                let sample = k % n_samples;
                let rest = k / n_samples;
                return Err(Error::LossOutOfRange {
                    sample,
                    candidate: rest / n_objectives,
                    objective: rest % n_objectives,
                    value: v,
                });
            }
        }
        Ok(Self { n_samples, n_candidates, n_objectives, values })
    }

    pub fn from_fn(
        n_samples: usize,
        n_candidates: usize,
        n_objectives: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_samples * n_candidates * n_objectives);
        for c in 0..n_candidates {
            for o in 0..n_objectives {
                for s in 0..n_samples {
                    values.push(f(s, c, o));
                }
            }
        }
        Self::from_candidate_major(n_samples, n_candidates, n_objectives, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn get(&self, sample: usize, candidate: usize, objective: usize) -> f64 {
        self.values[self.offset(candidate, objective) + sample]
    }

    /// Losses of `candidate` on `objective`, one per sample.
    pub fn losses(&self, candidate: usize, objective: usize) -> &[f64] {
        let start = self.offset(candidate, objective);
        &self.values[start..start + self.n_samples]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, candidate: usize, objective: usize) -> usize {
        assert!(candidate < self.n_candidates && objective < self.n_objectives);
        (candidate * self.n_objectives + objective) * self.n_samples
    }

    /// Table restricted to the given samples, in the given order.
    pub fn select_samples(&self, samples: &[usize]) -> Self {
        let mut values = Vec::with_capacity(samples.len() * self.n_candidates * self.n_objectives);
        for c in 0..self.n_candidates {
            for o in 0..self.n_objectives {
                let row = self.losses(c, o);
                values.extend(samples.iter().map(|&s| row[s]));
            }
        }
        Self { n_samples: samples.len(), values, ..*self }
    }

    /// Table restricted to the given candidates, in the given order.
    pub fn select_candidates(&self, candidates: &[usize]) -> Self {
        let stride = self.n_objectives * self.n_samples;
        let mut values = Vec::with_capacity(candidates.len() * stride);
        for &c in candidates {
            let start = c * stride;
            values.extend_from_slice(&self.values[start..start + stride]);
        }
        Self { n_candidates: candidates.len(), values, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RiskMeasure {
    /// Expected loss.
    Average,
    /// The `q`-quantile of the loss, `inf { r : P[loss <= r] >= q }`.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectiveRole {
    /// Must stay strictly below the threshold.
    Controlled(f64),
    /// Only minimised; never tested.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskSpec {
    pub objective: usize,
    pub measure: RiskMeasure,
    pub role: ObjectiveRole,
}

impl RiskSpec {
    pub fn new(objective: usize, measure: RiskMeasure, role: ObjectiveRole) -> Result<Self> {
        if let RiskMeasure::Quantile(q) = measure {
            check_open_unit("quantile level", q)?;
        }
        if let ObjectiveRole::Controlled(alpha) = role {
            check_open_unit("threshold", alpha)?;
        }
        Ok(Self { objective, measure, role })
    }

    pub fn average(objective: usize, alpha: f64) -> Result<Self> {
        Self::new(objective, RiskMeasure::Average, ObjectiveRole::Controlled(alpha))
    }

    pub fn quantile(objective: usize, q: f64, alpha: f64) -> Result<Self> {
        Self::new(objective, RiskMeasure::Quantile(q), ObjectiveRole::Controlled(alpha))
    }

    pub fn free(objective: usize) -> Self {
        Self { objective, measure: RiskMeasure::Average, role: ObjectiveRole::Free }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.role {
            ObjectiveRole::Controlled(a) => Some(a),
            ObjectiveRole::Free => None,
        }
    }

    pub fn is_controlled(&self) -> bool {
        matches!(self.role, ObjectiveRole::Controlled(_))
    }

    /// Plug-in estimate of this spec's risk measure.
    pub fn estimate(&self, losses: &[f64]) -> Result<f64> {
        match self.measure {
            RiskMeasure::Average => empirical_average_risk(losses),
            RiskMeasure::Quantile(q) => empirical_quantile(losses, q),
        }
    }
}

/// Controlled and free objectives of a selection problem, one spec per
/// objective, controlled specs first.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MultiObjectiveProblem {
    specs: Vec<RiskSpec>,
    n_controlled: usize,
}

impl MultiObjectiveProblem {
    pub fn new(specs: Vec<RiskSpec>) -> Result<Self> {
        let n_controlled = specs.iter().take_while(|s| s.is_controlled()).count();
        if n_controlled == 0 {
            return Err(Error::InvalidProblem("at least one controlled objective is required"));
        }
        if specs[n_controlled..].iter().any(RiskSpec::is_controlled) {
            return Err(Error::InvalidProblem("controlled objectives must precede free ones"));
        }
        let mut seen = BTreeSet::new();
        for s in &specs {
            if s.objective >= specs.len() || !seen.insert(s.objective) {
                return Err(Error::InvalidProblem(
                    "each objective must appear in exactly one spec",
                ));
            }
        }
        Ok(Self { specs, n_controlled })
    }

    /// Single controlled objective 0.
    pub fn single(spec: RiskSpec) -> Result<Self> {
        Self::new(alloc::vec![spec])
    }

    pub fn specs(&self) -> &[RiskSpec] {
        &self.specs
    }

    pub fn controlled(&self) -> &[RiskSpec] {
        &self.specs[..self.n_controlled]
    }

    pub fn free(&self) -> &[RiskSpec] {
        &self.specs[self.n_controlled..]
    }

    pub fn n_objectives(&self) -> usize {
        self.specs.len()
    }

    pub fn n_controlled(&self) -> usize {
        self.n_controlled
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.controlled().iter().filter_map(RiskSpec::threshold)
    }

    pub fn check_table(&self, table: &LossTable) -> Result<()> {
        if table.n_objectives() != self.specs.len() {
            return Err(Error::DimensionMismatch {
                what: "objectives in loss table",
                expected: self.specs.len(),
                found: table.n_objectives(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitConfig {
    pub fraction_opt: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub const DEFAULT_FRACTION_OPT: f64 = 0.5;

    pub fn new(fraction_opt: f64, seed: u64) -> Result<Self> {
        check_open_unit("fraction_opt", fraction_opt)?;
        Ok(Self { fraction_opt, seed })
    }

    pub fn with_seed(seed: u64) -> Self {
        Self { fraction_opt: Self::DEFAULT_FRACTION_OPT, seed }
    }
}

/// Mean of the losses.
pub fn empirical_average_risk(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Number of losses at or above `threshold`.
pub fn exceedance_count(losses: &[f64], threshold: f64) -> Result<usize> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(losses.iter().filter(|&&l| l >= threshold).count())
}

/// Plug-in `q`-quantile: the `ceil(q * n)`-th smallest loss, i.e. the
/// smallest sample value `r` with at least a `q` fraction of the sample at
/// or below `r`.
pub fn empirical_quantile(losses: &[f64], q: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    check_open_unit("quantile level", q)?;
    let n = losses.len();
    let rank = ceil_rank(q * n as f64).clamp(1, n);
    let mut sorted: Vec<f64> = losses.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*kth)
}

/// Seeded partition of `0..n_samples` into (optimization, testing) index
/// sets, each sorted ascending.
pub fn split_indices(n_samples: usize, cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    check_open_unit("fraction_opt", cfg.fraction_opt)?;
    let n_opt = floor_rank(cfg.fraction_opt * n_samples as f64).min(n_samples);
    if n_samples < 2 || n_opt == 0 || n_opt == n_samples {
        return Err(Error::DegenerateSplit { n_samples, opt: n_opt });
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let mut opt = order[..n_opt].to_vec();
    let mut test = order[n_opt..].to_vec();
    opt.sort_unstable();
    test.sort_unstable();
    Ok((opt, test))
}

/// Splits the calibration samples into (optimization, testing) tables.
pub fn split_calibration(table: &LossTable, cfg: &SplitConfig) -> Result<(LossTable, LossTable)> {
    let (opt, test) = split_indices(table.n_samples(), cfg)?;
    Ok((table.select_samples(&opt), table.select_samples(&test)))
}

fn ceil_rank(x: f64) -> usize {
    let r = libm::ceil(x - RANK_EPS * x.abs().max(1.0));
    if r <= 0.0 { 0 } else { r as usize }
}

fn floor_rank(x: f64) -> usize {
    let r = libm::floor(x + RANK_EPS * x.abs().max(1.0));
    if r <= 0.0 { 0 } else { r as usize }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, expected: "a value strictly inside (0, 1)" })
    }
}
