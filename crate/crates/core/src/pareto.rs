//! Pareto Testing: restrict to the estimated Pareto front on one half of
//! the calibration data, order the front by that half's p-values, then run
//! fixed-sequence testing with p-values from the other half.

use alloc::vec::Vec;

use crate::evidence::{DataSplit, PValue};
use crate::mht::{fixed_sequence_test, PValueMap, Pipeline, SelectionResult};
use crate::pipeline::candidate_p_value;
use crate::risk::{split_calibration, CandidateSet, LossTable, MultiObjectiveProblem, SplitConfig};
use crate::{Error, Result};

/// Non-dominated subset of a set of risk vectors (all coordinates are
/// minimised).
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    /// Indices into `risks`, ascending.
    pub members: Vec<usize>,
    pub risks: Vec<Vec<f64>>,
}

impl ParetoFront {
    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }
}

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

/// Points not dominated by any other point; duplicates of a front point are
/// all kept.
///
/// Points are scanned in lexicographic order, where any dominator precedes
/// the points it dominates, so each point only has to be compared with the
/// front found so far.
pub fn pareto_front(points: &[Vec<f64>]) -> Result<ParetoFront> {
    let dim = points.first().ok_or(Error::EmptySample)?.len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { what: "risk vector length", expected: dim, found: p.len() });
        }
        if let Some(&bad) = p.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter { name: "risk coordinate", value: bad, expected: "a finite value" });
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut members: Vec<usize> = Vec::new();
    for i in order {
        if !members.iter().any(|&j| dominates(&points[j], &points[i])) {
            members.push(i);
        }
    }
    members.sort_unstable();
    Ok(ParetoFront { members, risks: points.to_vec() })
}

/// Front members sorted by ascending optimization-split p-value, ties by
/// identifier.
pub fn pt_order(p_opt: &PValueMap) -> Result<Vec<alloc::string::String>> {
    for (id, p) in p_opt {
        if p.split != DataSplit::Optimization {
            return Err(Error::ProvenanceViolation {
                candidate: id.clone(),
                expected: DataSplit::Optimization.as_str(),
                found: p.split.as_str(),
            });
        }
    }
    let mut entries: Vec<(&alloc::string::String, &PValue)> = p_opt.iter().collect();
    entries.sort_by(|a, b| a.1.value().total_cmp(&b.1.value()).then_with(|| a.0.cmp(b.0)));
    Ok(entries.into_iter().map(|(id, _)| id.clone()).collect())
}

/// Estimated risk vector of every candidate, one coordinate per spec in
/// problem order.
pub fn estimate_risks(table: &LossTable, problem: &MultiObjectiveProblem) -> Result<Vec<Vec<f64>>> {
    problem.check_table(table)?;
    (0..table.n_candidates())
        .map(|c| problem.specs().iter().map(|s| s.estimate(table.losses(c, s.objective))).collect())
        .collect()
}

/// Calibration data split into the two halves plus the front estimated on
/// the optimization half.
#[derive(Debug, Clone)]
pub struct SplitFront {
    pub opt: LossTable,
    pub test: LossTable,
    pub front: ParetoFront,
}

pub fn split_and_front(table: &LossTable, problem: &MultiObjectiveProblem, split: &SplitConfig) -> Result<SplitFront> {
    problem.check_table(table)?;
    let (opt, test) = split_calibration(table, split)?;
    if opt.n_samples() < 2 || test.n_samples() < 2 {
        return Err(Error::DegenerateSplit { n_samples: table.n_samples(), opt: opt.n_samples() });
    }
    let front = pareto_front(&estimate_risks(&opt, problem)?)?;
    Ok(SplitFront { opt, test, front })
}

pub(crate) fn member_p_values(
    table: &LossTable,
    candidates: &CandidateSet,
    members: &[usize],
    problem: &MultiObjectiveProblem,
    split: DataSplit,
) -> Result<PValueMap> {
    members
        .iter()
        .map(|&c| Ok((candidates.id(c).into(), candidate_p_value(table, c, problem, split)?)))
        .collect()
}

/// Full Pareto Testing pipeline at FWER level `delta`.
pub fn pareto_testing(
    table: &LossTable,
    candidates: &CandidateSet,
    problem: &MultiObjectiveProblem,
    split: &SplitConfig,
    delta: f64,
) -> Result<SelectionResult> {
    if candidates.len() != table.n_candidates() {
        return Err(Error::DimensionMismatch {
            what: "candidates in loss table",
            expected: candidates.len(),
            found: table.n_candidates(),
        });
    }
    let SplitFront { opt, test, front } = split_and_front(table, problem, split)?;
    let p_opt = member_p_values(&opt, candidates, &front.members, problem, DataSplit::Optimization)?;
    let order = pt_order(&p_opt)?;
    let p_test = member_p_values(&test, candidates, &front.members, problem, DataSplit::Testing)?;
    let ordered: Vec<_> = order.into_iter().map(|id| { let p = p_test[&id]; (id, p) }).collect();
    Ok(fixed_sequence_test(&ordered, delta)?.with_pipeline(Pipeline::ParetoTesting))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::RiskSpec;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn front_examples() {
        let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(pareto_front(&pts).unwrap().members, vec![0, 1, 2]);
        assert_eq!(pareto_front(&[vec![0.4, 0.2]]).unwrap().members, vec![0]);
        let dup = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_front(&dup).unwrap().members, vec![0, 1]);
        assert!(pareto_front(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(pareto_front(&[vec![f64::NAN]]).is_err());
        assert!(pareto_front(&[]).is_err());
    }

    fn opt_p(v: f64) -> PValue {
        PValue::external(v).unwrap().on_split(DataSplit::Optimization)
    }

    #[test]
    fn order_examples() {
        let m: PValueMap = [("a", 0.3), ("b", 0.05), ("c", 0.6)].iter().map(|&(k, v)| (k.to_string(), opt_p(v))).collect();
        assert_eq!(pt_order(&m).unwrap(), vec!["b", "a", "c"]);
        let eq: PValueMap = ["z", "x", "y"].iter().map(|k| (k.to_string(), opt_p(0.2))).collect();
        assert_eq!(pt_order(&eq).unwrap(), vec!["x", "y", "z"]);
        let mut bad = eq.clone();
        bad.insert("w".into(), opt_p(0.1).on_split(DataSplit::Testing));
        assert!(matches!(pt_order(&bad), Err(Error::ProvenanceViolation { .. })));
    }

    #[test]
    fn single_candidate_is_one_hoeffding_test() {
        let t = LossTable::from_fn(100, 1, 1, |s, _, _| if s % 10 == 0 { 1.0 } else { 0.0 }).unwrap();
        let cands = CandidateSet::from_ids(["only"]).unwrap();
        let problem = MultiObjectiveProblem::single(RiskSpec::average(0, 0.4).unwrap()).unwrap();
        let split = SplitConfig::with_seed(3);
        let r = pareto_testing(&t, &cands, &problem, &split, 0.1).unwrap();
        let (_, test) = split_calibration(&t, &split).unwrap();
        let p = candidate_p_value(&test, 0, &problem, DataSplit::Testing).unwrap();
        assert_eq!(r.audit.len(), 1);
        assert_eq!(r.audit[0].statistic, p.value());
        assert_eq!(r.is_empty(), p.value() > 0.1);
        assert_eq!(r.audit[0].threshold, 0.1);
    }

    #[test]
    fn rejects_tiny_splits() {
        let t = LossTable::from_fn(3, 1, 1, |_, _, _| 0.0).unwrap();
        let cands = CandidateSet::from_ids(["a"]).unwrap();
        let problem = MultiObjectiveProblem::single(RiskSpec::average(0, 0.4).unwrap()).unwrap();
        assert!(pareto_testing(&t, &cands, &problem, &SplitConfig::with_seed(1), 0.1).is_err());
    }
}
