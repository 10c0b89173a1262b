//! Reliability graphs from pairwise prior beliefs and paired calibration
//! losses, and the RG-PT pipeline that tests them with [`dagger`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::evidence::DataSplit;
use crate::graph::ReliabilityGraph;
use crate::mht::{dagger, Pipeline, SelectionResult};
use crate::pareto::{member_p_values, split_and_front};
use crate::risk::{CandidateSet, LossTable, MultiObjectiveProblem, SplitConfig};
use crate::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-9;

/// Prior probabilities `eta[i][j]` that candidate `i` is more reliable than
/// candidate `j`, with pseudocount strength `n_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorBeliefs {
    ids: Vec<String>,
    eta: Vec<f64>,
    n_p: f64,
}

impl PriorBeliefs {
    /// Dense row-major `eta`; the diagonal is ignored.
    pub fn new(ids: Vec<String>, eta: Vec<f64>, n_p: f64) -> Result<Self> {
        let m = ids.len();
        if eta.len() != m * m {
            return Err(Error::DimensionMismatch { what: "prior matrix cells", expected: m * m, found: eta.len() });
        }
        if !(n_p >= 0.0 && n_p.is_finite()) {
            return Err(Error::InvalidParameter { name: "n_p", value: n_p, expected: "a finite value >= 0" });
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateCandidate(id.clone()));
            }
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let v = eta[i * m + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter { name: "eta", value: v, expected: "[0, 1]" });
                }
                let sum = v + eta[j * m + i];
                if (sum - 1.0).abs() > CONSISTENCY_TOL {
                    return Err(Error::InconsistentPosterior { i, j, sum });
                }
            }
        }
        Ok(Self { ids, eta, n_p })
    }

    /// Every pair at 1/2.
    pub fn uninformative(ids: Vec<String>, n_p: f64) -> Result<Self> {
        let m = ids.len();
        Self::new(ids, vec![0.5; m * m], n_p)
    }

    /// Sparse form: each `(i, j, eta)` also sets `eta[j][i] = 1 - eta`;
    /// pairs not listed stay at 1/2.
    pub fn from_pairs(ids: Vec<String>, pairs: &[(usize, usize, f64)], n_p: f64) -> Result<Self> {
        let m = ids.len();
        let mut eta = vec![0.5; m * m];
        for &(i, j, v) in pairs {
            if i >= m || j >= m || i == j {
                return Err(Error::DimensionMismatch { what: "prior pair index", expected: m, found: i.max(j) });
            }
            eta[i * m + j] = v;
            eta[j * m + i] = 1.0 - v;
        }
        Self::new(ids, eta, n_p)
    }

    /// Prior where the first candidate in `order` is believed more reliable
    /// than every later one with probability `eta`.
    pub fn from_order(ids: Vec<String>, order: &[usize], eta: f64, n_p: f64) -> Result<Self> {
        let mut pairs = Vec::new();
        for (a, &i) in order.iter().enumerate() {
            for &j in &order[a + 1..] {
                pairs.push((i, j, eta));
            }
        }
        Self::from_pairs(ids, &pairs, n_p)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_p(&self) -> f64 {
        self.n_p
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.eta[i * self.len() + j]
    }

    /// Prior over the given identifiers, in that order.
    pub fn restrict(&self, ids: &[&str]) -> Result<Self> {
        let idx = ids
            .iter()
            .map(|id| self.ids.iter().position(|x| x == id).ok_or_else(|| Error::UnknownCandidate((*id).into())))
            .collect::<Result<Vec<_>>>()?;
        let k = idx.len();
        let mut eta = vec![0.5; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                eta[a * k + b] = self.eta(i, j);
            }
        }
        Self::new(ids.iter().map(|s| String::from(*s)).collect(), eta, self.n_p)
    }
}

/// Posterior probabilities `pi[i][j]` that `i` is more reliable than `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn new(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let m = ids.len();
        if values.len() != m * m {
            return Err(Error::DimensionMismatch { what: "preference matrix cells", expected: m * m, found: values.len() });
        }
        Ok(Self { ids, values })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    fn check_consistent(&self) -> Result<()> {
        let m = self.len();
        for i in 0..m {
            for j in (i + 1)..m {
                let sum = self.get(i, j) + self.get(j, i);
                if sum.is_nan() || (sum - 1.0).abs() > CONSISTENCY_TOL {
                    return Err(Error::InconsistentPosterior { i, j, sum });
                }
            }
        }
        Ok(())
    }

    /// Mean preference of each row over the other candidates.
    pub fn scores(&self) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                if m < 2 {
                    return 0.5;
                }
                (0..m).filter(|&j| j != i).map(|j| self.get(i, j)).sum::<f64>() / (m - 1) as f64
            })
            .collect()
    }
}

/// Posterior mean of the categorical-Dirichlet model with pseudocounts
/// `n_p eta_ij` and paired "wins" `c_ij` (samples where `i` has the smaller
/// loss, ties counting 1/2): `(n_p eta_ij + c_ij) / (n_p + n)`.
pub fn posterior_preference(prior: &PriorBeliefs, table: &LossTable, objective: usize) -> Result<PreferenceMatrix> {
    let m = prior.len();
    if table.n_candidates() != m {
        return Err(Error::DimensionMismatch { what: "candidates in loss table", expected: m, found: table.n_candidates() });
    }
    if objective >= table.n_objectives() {
        return Err(Error::DimensionMismatch { what: "objective index", expected: table.n_objectives(), found: objective });
    }
    let n = table.n_samples() as f64;
    let denom = prior.n_p() + n;
    let mut values = vec![0.5; m * m];
    for i in 0..m {
        let li = table.losses(i, objective);
        for j in (i + 1)..m {
            let lj = table.losses(j, objective);
            let mut twice_wins = 0u64;
            for (a, b) in li.iter().zip(lj) {
                twice_wins += if a < b { 2 } else if a == b { 1 } else { 0 };
            }
            let c_ij = twice_wins as f64 / 2.0;
            let pi = if denom > 0.0 { (prior.n_p() * prior.eta(i, j) + c_ij) / denom } else { 0.5 };
            values[i * m + j] = pi;
            values[j * m + i] = 1.0 - pi;
        }
    }
    PreferenceMatrix::new(prior.ids().to_vec(), values)
}

/// Graph with edges `i -> j` for pairs where `i` ranks above `j` by mean
/// preference score and `pi_ij >= tau`, transitively reduced. Every edge
/// points down the score order, so the result is acyclic.
pub fn build_rg(posterior: &PreferenceMatrix, tau: f64) -> Result<ReliabilityGraph> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(Error::InvalidParameter { name: "tau", value: tau, expected: "a value in (0.5, 1]" });
    }
    posterior.check_consistent()?;
    let m = posterior.len();
    let scores = posterior.scores();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| posterior.ids()[a].cmp(&posterior.ids()[b])));
    let mut edges = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if posterior.get(i, j) >= tau {
                edges.push((i, j));
            }
        }
    }
    Ok(ReliabilityGraph::new(posterior.ids().to_vec(), &edges)?.transitive_reduction())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgPtConfig {
    pub tau: f64,
    /// Objective used for the paired comparisons; defaults to the first
    /// controlled objective.
    pub preference_objective: Option<usize>,
    /// Build the graph over the estimated Pareto front only.
    pub restrict_to_front: bool,
}

impl Default for RgPtConfig {
    fn default() -> Self {
        Self { tau: 0.6, preference_objective: None, restrict_to_front: true }
    }
}

#[derive(Debug, Clone)]
pub struct RgPtOutcome {
    pub selection: SelectionResult,
    pub graph: ReliabilityGraph,
}

/// RG-PT at FDR level `delta`.
pub fn rg_pt(
    table: &LossTable,
    candidates: &CandidateSet,
    problem: &MultiObjectiveProblem,
    prior: &PriorBeliefs,
    split: &SplitConfig,
    config: &RgPtConfig,
    delta: f64,
) -> Result<RgPtOutcome> {
    if candidates.len() != table.n_candidates() {
        return Err(Error::DimensionMismatch {
            what: "candidates in loss table",
            expected: candidates.len(),
            found: table.n_candidates(),
        });
    }
    {
        let mut a: Vec<&str> = prior.ids().iter().map(String::as_str).collect();
        let mut b: Vec<&str> = candidates.ids().collect();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::NodeSetMismatch);
        }
    }
    let objective = config.preference_objective.unwrap_or(problem.controlled()[0].objective);
    let sf = split_and_front(table, problem, split)?;
    let members: Vec<usize> =
        if config.restrict_to_front { sf.front.members.clone() } else { (0..candidates.len()).collect() };
    let member_ids: Vec<&str> = members.iter().map(|&c| candidates.id(c)).collect();
    let sub_prior = prior.restrict(&member_ids)?;
    let posterior = posterior_preference(&sub_prior, &sf.opt.select_candidates(&members), objective)?;
    let graph = build_rg(&posterior, config.tau)?;
    let p_test = member_p_values(&sf.test, candidates, &members, problem, DataSplit::Testing)?;
    let selection = dagger(&graph, &p_test, delta)?.with_pipeline(Pipeline::RgPt);
    Ok(RgPtOutcome { selection, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::RiskSpec;
    use alloc::string::ToString;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prior_validation() {
        assert!(PriorBeliefs::new(ids(&["a", "b"]), vec![0.0, 0.7, 0.4, 0.0], 1.0).is_err());
        assert!(PriorBeliefs::new(ids(&["a", "b"]), vec![0.0, 0.7, 0.3, 0.0], -1.0).is_err());
        let p = PriorBeliefs::from_pairs(ids(&["a", "b", "c"]), &[(0, 2, 0.9)], 3.0).unwrap();
        assert_eq!(p.eta(2, 0), 1.0 - 0.9);
        assert_eq!(p.eta(0, 1), 0.5);
        let r = p.restrict(&["c", "a"]).unwrap();
        assert_eq!(r.eta(1, 0), 0.9);
    }

    #[test]
    fn posterior_examples() {
        // candidate 0 wins on 1 sample of 10, loses 9
        let t = LossTable::from_fn(10, 2, 1, |s, c, _| if (s == 0) == (c == 0) { 0.0 } else { 1.0 }).unwrap();
        let prior = PriorBeliefs::from_pairs(ids(&["a", "b"]), &[(0, 1, 0.9)], 10.0).unwrap();
        let post = posterior_preference(&prior, &t, 0).unwrap();
        assert!((post.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(post.get(0, 1) + post.get(1, 0), 1.0);

        let data_only = PriorBeliefs::from_pairs(ids(&["a", "b"]), &[(0, 1, 0.9)], 0.0).unwrap();
        assert!((posterior_preference(&data_only, &t, 0).unwrap().get(0, 1) - 0.1).abs() < 1e-15);

        let empty = LossTable::from_fn(0, 2, 1, |_, _, _| 0.0).unwrap();
        assert_eq!(posterior_preference(&prior, &empty, 0).unwrap().get(0, 1), 0.9);

        // ties count one half
        let tie = LossTable::from_fn(4, 2, 1, |_, _, _| 0.3).unwrap();
        assert_eq!(posterior_preference(&data_only, &tie, 0).unwrap().get(0, 1), 0.5);
        assert!(posterior_preference(&prior, &tie, 1).is_err());
    }

    #[test]
    fn build_rg_examples() {
        let names = ids(&["a", "b", "c"]);
        let mut v = vec![0.0; 9];
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            v[i * 3 + j] = 0.99;
            v[j * 3 + i] = 1.0 - 0.99;
        }
        let g = build_rg(&PreferenceMatrix::new(names.clone(), v).unwrap(), 0.9).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);

        let flat = build_rg(&PreferenceMatrix::new(names.clone(), vec![0.5; 9]).unwrap(), 0.9).unwrap();
        assert!(flat.edges().is_empty());

        let mut bad = vec![0.5; 9];
        bad[1] = 0.8;
        assert!(matches!(
            build_rg(&PreferenceMatrix::new(names, bad).unwrap(), 0.9),
            Err(Error::InconsistentPosterior { .. })
        ));
    }

    #[test]
    fn single_candidate_reduces_to_one_test() {
        let t = LossTable::from_fn(200, 1, 1, |s, _, _| if s % 20 == 0 { 1.0 } else { 0.0 }).unwrap();
        let cands = CandidateSet::from_ids(["only"]).unwrap();
        let problem = MultiObjectiveProblem::single(RiskSpec::average(0, 0.3).unwrap()).unwrap();
        let prior = PriorBeliefs::uninformative(ids(&["only"]), 1.0).unwrap();
        let out = rg_pt(&t, &cands, &problem, &prior, &SplitConfig::with_seed(9), &RgPtConfig::default(), 0.1).unwrap();
        assert_eq!(out.selection.audit.len(), 1);
        assert!((out.selection.audit[0].threshold - 0.1).abs() < 1e-15);
        assert_eq!(out.selection.selected, vec!["only"]);
    }
}
