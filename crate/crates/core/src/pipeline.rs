//! Fixed-sample selection: per-candidate p-values from a loss table,
//! followed by an FWER-controlling procedure (LTT for average risk, QLTT
//! for quantile risk).

use alloc::vec::Vec;

use crate::evidence::{combine_p_values, hoeffding_p_value, quantile_p_value, DataSplit, PValue};
use crate::mht::{bonferroni, fixed_sequence_test, PValueMap, Pipeline, SelectionResult};
use crate::risk::{
    empirical_average_risk, exceedance_count, CandidateSet, LossTable, MultiObjectiveProblem, RiskMeasure,
    RiskSpec,
};
use crate::{Error, Result};

/// p-value of one controlled spec on one candidate's losses.
pub fn spec_p_value(spec: &RiskSpec, losses: &[f64], split: DataSplit) -> Result<PValue> {
    let alpha = spec.threshold().ok_or(Error::InvalidProblem("free objectives carry no p-value"))?;
    let p = match spec.measure {
        RiskMeasure::Average => hoeffding_p_value(losses.len(), alpha, empirical_average_risk(losses)?)?,
        RiskMeasure::Quantile(q) => quantile_p_value(exceedance_count(losses, alpha)?, losses.len(), q)?,
    };
    Ok(p.on_split(split))
}

/// p-value for "some controlled objective is violated": the component
/// p-value when there is one controlled objective, their maximum otherwise.
pub fn candidate_p_value(
    table: &LossTable,
    candidate: usize,
    problem: &MultiObjectiveProblem,
    split: DataSplit,
) -> Result<PValue> {
    let parts = problem
        .controlled()
        .iter()
        .map(|s| spec_p_value(s, table.losses(candidate, s.objective), split))
        .collect::<Result<Vec<_>>>()?;
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        combine_p_values(&parts)
    }
}

pub fn candidate_p_values(table: &LossTable, problem: &MultiObjectiveProblem, split: DataSplit) -> Result<Vec<PValue>> {
    problem.check_table(table)?;
    (0..table.n_candidates()).map(|c| candidate_p_value(table, c, problem, split)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FwerProcedure {
    #[default]
    Bonferroni,
    /// Fixed-sequence testing in candidate-set order, most reliable first.
    FixedSequence,
}

/// Tests every candidate on the whole table.
pub fn learn_then_test(
    table: &LossTable,
    candidates: &CandidateSet,
    problem: &MultiObjectiveProblem,
    procedure: FwerProcedure,
    delta: f64,
) -> Result<SelectionResult> {
    if candidates.len() != table.n_candidates() {
        return Err(Error::DimensionMismatch {
            what: "candidates in loss table",
            expected: candidates.len(),
            found: table.n_candidates(),
        });
    }
    if table.n_samples() == 0 {
        return Err(Error::EmptySample);
    }
    let ps = candidate_p_values(table, problem, DataSplit::Full)?;
    let result = match procedure {
        FwerProcedure::Bonferroni => {
            let map: PValueMap = candidates.ids().map(Into::into).zip(ps).collect();
            bonferroni(&map, delta)?
        }
        FwerProcedure::FixedSequence => {
            let ordered: Vec<_> = candidates.ids().map(Into::into).zip(ps).collect();
            fixed_sequence_test(&ordered, delta)?
        }
    };
    let quantile = problem.controlled().iter().any(|s| matches!(s.measure, RiskMeasure::Quantile(_)));
    Ok(result.with_pipeline(if quantile { Pipeline::Qltt } else { Pipeline::Ltt }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::PValueMethod;
    use alloc::vec;

    #[test]
    fn combined_is_max_over_controlled() {
        // objective 0 mean 0.1, objective 1 mean 0.0, objective 2 free
        let t = LossTable::from_fn(10, 1, 3, |s, _, o| match o {
            0 => if s == 0 { 1.0 } else { 0.0 },
            1 => 0.0,
            _ => 0.7,
        })
        .unwrap();
        let problem = MultiObjectiveProblem::new(vec![
            RiskSpec::average(0, 0.3).unwrap(),
            RiskSpec::average(1, 0.3).unwrap(),
            RiskSpec::free(2),
        ])
        .unwrap();
        let p = candidate_p_value(&t, 0, &problem, DataSplit::Testing).unwrap();
        assert_eq!(p.method, PValueMethod::Combined);
        assert_eq!(p.split, DataSplit::Testing);
        let want = libm::exp(-2.0 * 10.0 * 0.2 * 0.2);
        assert!((p.value() - want).abs() < 1e-12);
    }

    #[test]
    fn quantile_spec_uses_exceedances() {
        let t = LossTable::from_fn(10, 1, 1, |s, _, _| if s < 2 { 0.5 } else { 0.0 }).unwrap();
        let spec = RiskSpec::quantile(0, 0.5, 0.5).unwrap();
        let p = spec_p_value(&spec, t.losses(0, 0), DataSplit::Full).unwrap();
        assert!((p.value() - 56.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn ltt_tags() {
        let t = LossTable::from_fn(400, 2, 1, |s, c, _| if c == 0 || s % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        let cands = CandidateSet::from_ids(["good", "bad"]).unwrap();
        let avg = MultiObjectiveProblem::single(RiskSpec::average(0, 0.2).unwrap()).unwrap();
        let r = learn_then_test(&t, &cands, &avg, FwerProcedure::Bonferroni, 0.1).unwrap();
        assert_eq!(r.selected, vec!["good"]);
        assert_eq!(r.pipeline, Some(Pipeline::Ltt));
        let q = MultiObjectiveProblem::single(RiskSpec::quantile(0, 0.9, 0.2).unwrap()).unwrap();
        let r = learn_then_test(&t, &cands, &q, FwerProcedure::FixedSequence, 0.1).unwrap();
        assert_eq!(r.selected, vec!["good"]);
        assert_eq!(r.pipeline, Some(Pipeline::Qltt));
    }
}
