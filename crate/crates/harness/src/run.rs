//! Running a configured method on one dataset.

use std::collections::BTreeMap;

use hypersel_core::adaptive::{AcquisitionPolicy, AdaptiveSession};
use hypersel_core::graph::ReliabilityGraph;
use hypersel_core::mht::SelectionResult;
use hypersel_core::pareto::{pareto_testing, split_and_front};
use hypersel_core::pipeline::learn_then_test;
use hypersel_core::reliability::{rg_pt, PriorBeliefs, RgPtConfig};
use hypersel_core::risk::CandidateSet;
use hypersel_core::seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::io::{load_feed, load_loss_table, load_prior, numbered_samples, Feed, LoadedTable};
use crate::registry::Method;
use crate::scenario::{generate_synthetic, Sampler, ScenarioSpec};

/// Where a run's losses come from.
#[derive(Debug, Clone)]
pub enum Data {
    Table(LoadedTable),
    Feed(Feed),
    /// Losses drawn on demand (adaptive runs on a scenario).
    Live { candidates: CandidateSet, sampler: Sampler, seed: u64 },
}

impl Data {
    pub fn candidates(&self) -> &CandidateSet {
        match self {
            Data::Table(t) => &t.candidates,
            Data::Feed(f) => &f.candidates,
            Data::Live { candidates, .. } => candidates,
        }
    }

    /// Dataset for `method` drawn from a scenario with the given seed.
    pub fn from_scenario(spec: &ScenarioSpec, method: Method, data_seed: u64) -> Result<Self> {
        if method == Method::Altt {
            Ok(Data::Live { candidates: spec.candidate_set(), sampler: spec.sampler()?, seed: data_seed })
        } else {
            let sc = spec.generate(data_seed)?;
            Ok(Data::Table(LoadedTable {
                candidates: sc.candidates,
                sample_ids: numbered_samples(sc.table.n_samples()),
                table: sc.table,
            }))
        }
    }
}

/// Seed of the synthetic data under `master`.
pub fn data_seed(master: u64) -> u64 {
    seed::derive_named(master, "data")
}

/// Loads the data source named by the config.
pub fn resolve_data(cfg: &RunConfig, master: u64) -> Result<Data> {
    if let Some(path) = &cfg.input {
        return Ok(Data::Table(load_loss_table(path)?));
    }
    if let Some(path) = &cfg.feed {
        return Ok(Data::Feed(load_feed(path, cfg.candidates.as_deref())?));
    }
    if let Some(spec) = &cfg.scenario {
        let s = spec.seed.unwrap_or_else(|| data_seed(master));
        if cfg.method == Method::Altt {
            return Data::from_scenario(spec, cfg.method, s);
        }
        let sc = generate_synthetic(spec, s)?;
        return Ok(Data::Table(LoadedTable {
            candidates: sc.candidates,
            sample_ids: numbered_samples(sc.table.n_samples()),
            table: sc.table,
        }));
    }
    Err(HarnessError::config("no data source: give input, scenario or feed"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphExport {
    pub nodes: Vec<String>,
    /// `[more reliable, less reliable]` pairs.
    pub edges: Vec<[String; 2]>,
}

impl From<&ReliabilityGraph> for GraphExport {
    fn from(g: &ReliabilityGraph) -> Self {
        let nodes = g.nodes().to_vec();
        let edges = g.edges().into_iter().map(|(u, v)| [nodes[u].clone(), nodes[v].clone()]).collect();
        Self { nodes, edges }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveSummary {
    pub rounds: u64,
    pub consumed: u64,
    pub skipped: u64,
    pub query_counts: BTreeMap<String, u64>,
    pub rejection_order: Vec<String>,
    pub replay_verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOutput {
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
    pub n_candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(flatten)]
    pub selection: SelectionResult,
    pub audit_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub front: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphExport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSummary>,
}

/// A validated config with its side inputs loaded once.
#[derive(Debug, Clone)]
pub struct Runner {
    pub cfg: RunConfig,
    prior: Option<PriorBeliefs>,
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let prior = cfg.prior_path.as_deref().map(load_prior).transpose()?;
        Ok(Self { cfg, prior })
    }

    /// Uses `prior` for RG-PT instead of the configured file.
    pub fn with_prior(cfg: RunConfig, prior: PriorBeliefs) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, prior: Some(prior) })
    }

    pub fn calibrate(&self, data: &Data, master: u64) -> Result<CalibrationOutput> {
        let cfg = &self.cfg;
        let candidates = data.candidates();
        let (mut front, mut graph, mut adaptive) = (None, None, None);
        let n_samples;
        let selection = match (cfg.method, data) {
            (Method::Altt, _) => {
                let (selection, summary, n) = self.run_adaptive(data, master)?;
                adaptive = Some(summary);
                n_samples = n;
                selection
            }
            (_, Data::Table(t)) => {
                n_samples = Some(t.table.n_samples());
                let problem = cfg.problem(t.table.n_objectives())?;
                match cfg.method {
                    Method::Pt => {
                        let split = cfg.split_config(master)?;
                        let sf = split_and_front(&t.table, &problem, &split)?;
                        front = Some(sf.front.members.iter().map(|&c| candidates.id(c).to_string()).collect());
                        pareto_testing(&t.table, candidates, &problem, &split, cfg.delta)?
                    }
                    Method::Rgpt => {
                        let split = cfg.split_config(master)?;
                        let prior = match &self.prior {
                            Some(p) => p.clone(),
                            None => PriorBeliefs::uninformative(candidates.ids().map(String::from).collect(), 0.0)?,
                        };
                        let default = RgPtConfig::default();
                        let rg_cfg = RgPtConfig {
                            tau: cfg.tau.unwrap_or(default.tau),
                            preference_objective: None,
                            restrict_to_front: cfg.restrict_to_front.unwrap_or(default.restrict_to_front),
                        };
                        let r = rg_pt(&t.table, candidates, &problem, &prior, &split, &rg_cfg, cfg.delta)?;
                        graph = Some((&r.graph).into());
                        r.selection
                    }
                    _ => learn_then_test(&t.table, candidates, &problem, cfg.fwer_procedure(), cfg.delta)?,
                }
            }
            _ => return Err(HarnessError::config(format!("{} needs a loss table", cfg.method.info().name))),
        };
        let audit_verified = selection.verify_audit();
        if !audit_verified {
            return Err(HarnessError::Invariant("selection disagrees with its audit trail".into()));
        }
        if adaptive.as_ref().is_some_and(|a: &AdaptiveSummary| !a.replay_verified) {
            return Err(HarnessError::Invariant("e-process state disagrees with its query log".into()));
        }
        Ok(CalibrationOutput {
            method: cfg.method,
            delta: cfg.delta,
            seed: master,
            n_candidates: candidates.len(),
            n_samples,
            selection,
            audit_verified,
            front,
            graph,
            adaptive,
        })
    }

    fn run_adaptive(&self, data: &Data, master: u64) -> Result<(SelectionResult, AdaptiveSummary, Option<usize>)> {
        let cfg = &self.cfg;
        let mut session = AdaptiveSession::new(
            data.candidates().clone(),
            cfg.alphas[0],
            cfg.delta,
            cfg.betting_config()?,
            cfg.stopping_rule(),
        )?;
        let policy = cfg.policy_config()?;
        let policy_seed = seed::derive_named(master, "policy");
        let mut skipped = 0;
        let mut n_samples = None;
        match data {
            Data::Feed(feed) => {
                for (_, batch) in &feed.rounds {
                    if session.is_stopped() {
                        break;
                    }
                    skipped += session.ingest_batch(batch)?.skipped;
                }
            }
            Data::Table(t) => {
                n_samples = Some(t.table.n_samples());
                let mut next = vec![0usize; t.table.n_candidates()];
                drive(&mut session, &policy, policy_seed, |c| {
                    let v = t.table.losses(c, 0).get(next[c]).copied();
                    next[c] += 1;
                    v
                })?;
            }
            Data::Live { sampler, seed: s, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*s);
                drive(&mut session, &policy, policy_seed, |c| Some(sampler.draw(c, 0, &mut rng)))?;
            }
        }
        let ids = session.candidates();
        let summary = AdaptiveSummary {
            rounds: session.rounds(),
            consumed: session.consumed(),
            skipped,
            query_counts: ids.ids().map(String::from).zip(session.query_counts().iter().copied()).collect(),
            rejection_order: session.rejections().iter().map(|&c| ids.id(c).to_string()).collect(),
            replay_verified: session.verify_replay(1e-9),
        };
        Ok((session.selection(), summary, n_samples))
    }
}

/// Plan/observe rounds until the session stops or `next` runs dry.
fn drive<F>(session: &mut AdaptiveSession, policy: &AcquisitionPolicy, policy_seed: u64, mut next: F) -> Result<()>
where
    F: FnMut(usize) -> Option<f64>,
{
    while !session.is_stopped() {
        let plan = session.plan_round(policy, seed::derive(policy_seed, session.rounds()))?;
        for c in plan {
            if !session.is_pending(c) {
                continue;
            }
            match next(c) {
                Some(loss) => {
                    session.observe(c, loss)?;
                }
                None => {
                    session.stop();
                    return Ok(());
                }
            }
        }
        session.finish_round();
    }
    Ok(())
}
