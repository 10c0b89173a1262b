//! Multiple-testing procedures.
//!
//! Each procedure returns a [`SelectionResult`] whose audit log holds the
//! decisive comparison for every tested candidate, so the selection can be
//! recomputed from the log alone (see [`SelectionResult::verify_audit`]).
//! Ties between equal statistics are broken by candidate identifier.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::evidence::{ville_threshold, DataSplit, EProcessState, PValue, PValueMethod};
use crate::graph::ReliabilityGraph;
use crate::risk::check_open_unit;
use crate::{Error, Result};

pub type PValueMap = BTreeMap<String, PValue>;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "delta", rename_all = "snake_case"))]
pub enum Guarantee {
    Fwer(f64),
    Fdr(f64),
}

impl Guarantee {
    pub fn delta(&self) -> f64 {
        match *self {
            Guarantee::Fwer(d) | Guarantee::Fdr(d) => d,
        }
    }

    pub fn is_fdr(&self) -> bool {
        matches!(self, Guarantee::Fdr(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Procedure {
    Bonferroni,
    FixedSequence,
    UcbFixedSequence,
    BenjaminiHochberg,
    Dagger,
    EValueFwer,
}

/// Selection pipeline that produced a result, when there is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Pipeline {
    Ltt,
    Qltt,
    ParetoTesting,
    RgPt,
    Altt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Relation {
    #[cfg_attr(feature = "serde", serde(rename = "<"))]
    Lt,
    #[cfg_attr(feature = "serde", serde(rename = "<="))]
    Le,
    #[cfg_attr(feature = "serde", serde(rename = ">="))]
    Ge,
}

impl Relation {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Relation::Lt => statistic < threshold,
            Relation::Le => statistic <= threshold,
            Relation::Ge => statistic >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AuditEntry {
    pub candidate: String,
    /// Position in the sequence for ordered procedures, depth for DAG
    /// testing, 0 otherwise.
    pub stage: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub rejected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Evidence {
    PValue { value: f64, method: PValueMethod, split: DataSplit },
    UpperBound { value: f64, level: f64 },
    Wealth { wealth: f64, observations: u64 },
}

impl From<PValue> for Evidence {
    fn from(p: PValue) -> Self {
        Evidence::PValue { value: p.value(), method: p.method, split: p.split }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EvidenceEntry {
    pub candidate: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub evidence: Evidence,
}

/// Certified subset of candidates plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SelectionResult {
    pub procedure: Procedure,
    pub pipeline: Option<Pipeline>,
    pub guarantee: Guarantee,
    /// Selected identifiers in audit order.
    pub selected: Vec<String>,
    pub evidence: Vec<EvidenceEntry>,
    pub audit: Vec<AuditEntry>,
}

impl SelectionResult {
    fn new(procedure: Procedure, guarantee: Guarantee, evidence: Vec<EvidenceEntry>, audit: Vec<AuditEntry>) -> Self {
        let selected = audit.iter().filter(|a| a.rejected).map(|a| a.candidate.clone()).collect();
        Self { procedure, pipeline: None, guarantee, selected, evidence, audit }
    }

    pub fn with_pipeline(mut self, pipeline: Pipeline) -> Self {
        self.pipeline = Some(pipeline);
        self
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.selected.iter().any(|s| s == id)
    }

    /// Recomputes the selection from the audit log.
    pub fn replay_audit(&self) -> Vec<String> {
        self.audit
            .iter()
            .filter(|a| a.relation.holds(a.statistic, a.threshold))
            .map(|a| a.candidate.clone())
            .collect()
    }

    /// True when every logged comparison agrees with its recorded outcome
    /// and the selection equals the replayed one.
    pub fn verify_audit(&self) -> bool {
        self.audit.iter().all(|a| a.relation.holds(a.statistic, a.threshold) == a.rejected)
            && self.replay_audit() == self.selected
    }
}

fn check_delta(delta: f64) -> Result<()> {
    check_open_unit("delta", delta)
}

fn evidence_of(p: &PValueMap) -> Vec<EvidenceEntry> {
    p.iter().map(|(id, v)| EvidenceEntry { candidate: id.clone(), evidence: (*v).into() }).collect()
}

fn by_p_then_id(a: &(&String, &PValue), b: &(&String, &PValue)) -> Ordering {
    a.1.value().total_cmp(&b.1.value()).then_with(|| a.0.cmp(b.0))
}

/// Selects `{ lambda : p_lambda < delta / m }`.
pub fn bonferroni(p: &PValueMap, delta: f64) -> Result<SelectionResult> {
    check_delta(delta)?;
    let threshold = delta / p.len().max(1) as f64;
    let audit = p
        .iter()
        .map(|(id, v)| AuditEntry {
            candidate: id.clone(),
            stage: 0,
            statistic: v.value(),
            threshold,
            relation: Relation::Lt,
            rejected: v.value() < threshold,
        })
        .collect();
    Ok(SelectionResult::new(Procedure::Bonferroni, Guarantee::Fwer(delta), evidence_of(p), audit))
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = alloc::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateCandidate(id.into()));
        }
    }
    Ok(())
}

/// Tests `ordered` front to back at full level `delta` (`p <= delta`),
/// stopping at the first failure; candidates after it are never tested.
pub fn fixed_sequence_test(ordered: &[(String, PValue)], delta: f64) -> Result<SelectionResult> {
    check_delta(delta)?;
    check_unique(ordered.iter().map(|(id, _)| id.as_str()))?;
    let mut audit = Vec::new();
    for (stage, (id, p)) in ordered.iter().enumerate() {
        let rejected = p.value() <= delta;
        audit.push(AuditEntry {
            candidate: id.clone(),
            stage,
            statistic: p.value(),
            threshold: delta,
            relation: Relation::Le,
            rejected,
        });
        if !rejected {
            break;
        }
    }
    let evidence = ordered
        .iter()
        .map(|(id, p)| EvidenceEntry { candidate: id.clone(), evidence: (*p).into() })
        .collect();
    Ok(SelectionResult::new(Procedure::FixedSequence, Guarantee::Fwer(delta), evidence, audit))
}

/// Upper confidence bound on one candidate's risk, valid at level `level`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConfidenceBound {
    pub candidate: String,
    pub value: f64,
    pub level: f64,
}

impl ConfidenceBound {
    pub fn new(candidate: impl Into<String>, value: f64, level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidParameter { name: "upper bound", value, expected: "[0, 1]" });
        }
        check_delta(level)?;
        Ok(Self { candidate: candidate.into(), value, level })
    }
}

/// Fixed-sequence testing on upper confidence bounds: selects the longest
/// prefix with `R+ < alpha`.
pub fn ucb_fixed_sequence(ordered: &[ConfidenceBound], alpha: f64) -> Result<SelectionResult> {
    check_open_unit("threshold", alpha)?;
    let level = ordered.first().ok_or(Error::EmptySample)?.level;
    if ordered.iter().any(|b| b.level != level) {
        return Err(Error::MixedLevels);
    }
    check_unique(ordered.iter().map(|b| b.candidate.as_str()))?;
    let mut audit = Vec::new();
    for (stage, b) in ordered.iter().enumerate() {
        let rejected = b.value < alpha;
        audit.push(AuditEntry {
            candidate: b.candidate.clone(),
            stage,
            statistic: b.value,
            threshold: alpha,
            relation: Relation::Lt,
            rejected,
        });
        if !rejected {
            break;
        }
    }
    let evidence = ordered
        .iter()
        .map(|b| EvidenceEntry {
            candidate: b.candidate.clone(),
            evidence: Evidence::UpperBound { value: b.value, level: b.level },
        })
        .collect();
    Ok(SelectionResult::new(Procedure::UcbFixedSequence, Guarantee::Fwer(level), evidence, audit))
}

/// Benjamini-Hochberg step-up: with `p_(1) <= ... <= p_(m)`, rejects the
/// `k` smallest for the largest `k` with `p_(k) <= delta k / m`.
pub fn benjamini_hochberg(p: &PValueMap, delta: f64) -> Result<SelectionResult> {
    check_delta(delta)?;
    let m = p.len();
    let mut sorted: Vec<(&String, &PValue)> = p.iter().collect();
    sorted.sort_by(by_p_then_id);
    let k = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1].1.value() <= delta * k as f64 / m as f64)
        .unwrap_or(0);
    let threshold = delta * k as f64 / m.max(1) as f64;
    let audit = sorted
        .iter()
        .map(|(id, v)| AuditEntry {
            candidate: (*id).clone(),
            stage: 0,
            statistic: v.value(),
            threshold,
            relation: Relation::Le,
            rejected: v.value() <= threshold,
        })
        .collect();
    Ok(SelectionResult::new(Procedure::BenjaminiHochberg, Guarantee::Fdr(delta), evidence_of(p), audit))
}

/// Level-wise step-up testing on a DAG with leaf-weighted budgets.
///
/// Depth `d` holds the nodes whose longest root path has length `d`. At each
/// depth the testable nodes are those whose parents were all rejected
/// earlier. With `R` earlier rejections, `L` leaves in the graph and `l_v`
/// leaf descendants of `v`, the largest `r` such that at least `r` testable
/// nodes satisfy `p_v <= delta l_v (R + r) / L` is found, and exactly those
/// nodes are rejected. Testing stops at the first depth without rejections.
///
/// On an edgeless graph this is the Benjamini-Hochberg procedure.
pub fn dagger(graph: &ReliabilityGraph, p: &PValueMap, delta: f64) -> Result<SelectionResult> {
    check_delta(delta)?;
    graph.check_nodes(p.keys().map(String::as_str))?;
    let m = graph.len();
    let pv: Vec<f64> = graph.nodes().iter().map(|id| p[id].value()).collect();
    let depth = graph.depths();
    let leaves = graph.leaf_descendant_counts();
    let total_leaves = graph.leaf_count().max(1) as f64;
    let max_depth = depth.iter().copied().max().unwrap_or(0);

    let mut by_depth = vec![Vec::new(); max_depth + 1];
    for v in 0..m {
        by_depth[depth[v]].push(v);
    }

    let mut rejected = vec![false; m];
    let mut n_rejected = 0usize;
    let mut audit = Vec::new();
    for (d, level) in by_depth.iter().enumerate() {
        let mut testable: Vec<usize> = level
            .iter()
            .copied()
            .filter(|&v| graph.parents(v).iter().all(|&u| rejected[u]))
            .collect();
        if testable.is_empty() {
            break;
        }
        testable.sort_by(|&a, &b| pv[a].total_cmp(&pv[b]).then_with(|| graph.nodes()[a].cmp(&graph.nodes()[b])));
        let threshold = |v: usize, r: usize| delta * leaves[v] as f64 * (n_rejected + r) as f64 / total_leaves;
        let r_star = (1..=testable.len())
            .rev()
            .find(|&r| testable.iter().filter(|&&v| pv[v] <= threshold(v, r)).count() >= r)
            .unwrap_or(0);
        let mut new = 0;
        for &v in &testable {
            let t = threshold(v, r_star);
            let rej = pv[v] <= t;
            if rej {
                rejected[v] = true;
                new += 1;
            }
            audit.push(AuditEntry {
                candidate: graph.nodes()[v].clone(),
                stage: d,
                statistic: pv[v],
                threshold: t,
                relation: Relation::Le,
                rejected: rej,
            });
        }
        debug_assert_eq!(new, r_star);
        n_rejected += new;
        if new == 0 {
            break;
        }
    }
    Ok(SelectionResult::new(Procedure::Dagger, Guarantee::Fdr(delta), evidence_of(p), audit))
}

/// Selects every candidate whose wealth reached `m / delta`, with `m` the
/// number of candidates.
pub fn evalue_fwer(states: &BTreeMap<String, EProcessState>, delta: f64) -> Result<SelectionResult> {
    check_delta(delta)?;
    let threshold = ville_threshold(delta, states.len().max(1));
    let mut audit = Vec::with_capacity(states.len());
    let mut evidence = Vec::with_capacity(states.len());
    for (id, s) in states {
        audit.push(AuditEntry {
            candidate: id.clone(),
            stage: 0,
            statistic: s.wealth(),
            threshold,
            relation: Relation::Ge,
            rejected: s.wealth() >= threshold,
        });
        evidence.push(EvidenceEntry {
            candidate: id.clone(),
            evidence: Evidence::Wealth { wealth: s.wealth(), observations: s.t() },
        });
    }
    Ok(SelectionResult::new(Procedure::EValueFwer, Guarantee::Fwer(delta), evidence, audit))
}
