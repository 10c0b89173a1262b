//! The JSON run configuration. One document fully determines a run.

use std::path::{Path, PathBuf};

use hypersel_core::adaptive::{AcquisitionPolicy, PolicyKind, StoppingRule};
use hypersel_core::evidence::{BettingConfig, BettingStrategy};
use hypersel_core::pipeline::FwerProcedure;
use hypersel_core::risk::{MultiObjectiveProblem, RiskSpec, SplitConfig};
use hypersel_core::seed;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::registry::{GuaranteeKind, Measure, Method};
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhtChoice {
    Bonferroni,
    FixedSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default)]
    pub fraction_opt: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BettingChoice {
    Adaptive,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BettingSection {
    #[serde(default = "default_strategy")]
    pub strategy: BettingChoice,
    #[serde(default = "default_clip")]
    pub clip: f64,
}

fn default_strategy() -> BettingChoice {
    BettingChoice::Adaptive
}

fn default_clip() -> f64 {
    BettingConfig::DEFAULT_CLIP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySection {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub queries_per_round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub delta: f64,
    /// Thresholds of the controlled objectives `0..alphas.len()`; any
    /// further objectives in the data are free.
    pub alphas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mht: Option<MhtChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict_to_front: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betting: Option<BettingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingRule>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feed: Option<PathBuf>,
    /// Candidate identifiers of a feed, fixing `m` before ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    /// Guarantee to certify in `validate`; defaults to the method's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<GuaranteeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
}

pub const DEFAULT_TRIALS: usize = 1000;
pub const MIN_TRIALS: usize = 100;
pub const DEFAULT_BINS: usize = 20;

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(HarnessError::config(format!("{name} = {v} must lie in (0, 1)")))
    }
}

impl RunConfig {
    pub fn new(method: Method, delta: f64, alphas: Vec<f64>) -> Self {
        Self {
            method,
            delta,
            alphas,
            quantile_q: None,
            mht: None,
            split: None,
            prior_path: None,
            tau: None,
            restrict_to_front: None,
            betting: None,
            policy: None,
            stopping: None,
            seed: 0,
            input: None,
            scenario: None,
            feed: None,
            candidates: None,
            certify: None,
            trials: None,
            histogram_bins: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.feed, &mut cfg.prior_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("delta", self.delta)?;
        if self.alphas.is_empty() {
            return Err(HarnessError::config("alphas must name at least one controlled objective"));
        }
        for &a in &self.alphas {
            open_unit("alpha", a)?;
        }
        let info = self.method.info();
        let name = info.name;
        let sources = [self.input.is_some(), self.scenario.is_some(), self.feed.is_some()];
        if sources.iter().filter(|&&b| b).count() > 1 {
            return Err(HarnessError::config("give at most one of input, scenario, feed"));
        }
        if self.feed.is_some() && self.method != Method::Altt {
            return Err(HarnessError::config("feed is only meaningful for altt"));
        }
        match (info.measure, self.quantile_q) {
            (Measure::Quantile, None) => return Err(HarnessError::config(format!("{name} needs quantile_q"))),
            (Measure::Quantile, Some(q)) => open_unit("quantile_q", q)?,
            (Measure::Average, Some(_)) => {
                return Err(HarnessError::config(format!("{name} controls the average risk; quantile_q is not used")))
            }
            (Measure::Average, None) => {}
        }
        let only = |present: bool, field: &str, methods: &[Method]| -> Result<()> {
            if present && !methods.contains(&self.method) {
                Err(HarnessError::config(format!("{field} is not used by {name}")))
            } else {
                Ok(())
            }
        };
        only(self.mht.is_some(), "mht", &[Method::Ltt, Method::Qltt])?;
        only(self.split.is_some(), "split", &[Method::Pt, Method::Rgpt])?;
        only(self.prior_path.is_some(), "prior_path", &[Method::Rgpt])?;
        only(self.tau.is_some(), "tau", &[Method::Rgpt])?;
        only(self.restrict_to_front.is_some(), "restrict_to_front", &[Method::Rgpt])?;
        only(self.betting.is_some(), "betting", &[Method::Altt])?;
        only(self.policy.is_some(), "policy", &[Method::Altt])?;
        only(self.stopping.is_some(), "stopping", &[Method::Altt])?;
        only(self.candidates.is_some(), "candidates", &[Method::Altt])?;
        if info.adaptive && self.alphas.len() > 1 {
            return Err(HarnessError::config(format!("{name} controls a single objective")));
        }
        if let Some(t) = self.tau {
            if !(t > 0.5 && t <= 1.0) {
                return Err(HarnessError::config(format!("tau = {t} must lie in (0.5, 1]")));
            }
        }
        if let Some(s) = &self.split {
            if let Some(f) = s.fraction_opt {
                open_unit("split.fraction_opt", f)?;
            }
        }
        if self.method == Method::Altt {
            self.betting_config()?;
            self.policy_config()?;
            if self.scenario.is_some() && !self.stopping_rule().is_bounded() {
                return Err(HarnessError::config("altt on a scenario needs a bounded stopping rule"));
            }
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        if let Some(t) = self.trials {
            check_trials(t)?;
        }
        if self.histogram_bins == Some(0) {
            return Err(HarnessError::config("histogram_bins must be positive"));
        }
        Ok(())
    }

    pub fn problem(&self, n_objectives: usize) -> Result<MultiObjectiveProblem> {
        if self.alphas.len() > n_objectives {
            return Err(HarnessError::data(format!(
                "{} controlled objectives configured but the data has {n_objectives}",
                self.alphas.len()
            )));
        }
        let mut specs = Vec::with_capacity(n_objectives);
        for (o, &a) in self.alphas.iter().enumerate() {
            specs.push(match self.quantile_q {
                Some(q) => RiskSpec::quantile(o, q, a)?,
                None => RiskSpec::average(o, a)?,
            });
        }
        specs.extend((self.alphas.len()..n_objectives).map(RiskSpec::free));
        Ok(MultiObjectiveProblem::new(specs)?)
    }

    pub fn fwer_procedure(&self) -> FwerProcedure {
        match self.mht {
            Some(MhtChoice::FixedSequence) => FwerProcedure::FixedSequence,
            _ => FwerProcedure::Bonferroni,
        }
    }

    pub fn split_config(&self, master: u64) -> Result<SplitConfig> {
        let s = self.split.unwrap_or_default();
        let seed = s.seed.unwrap_or_else(|| seed::derive_named(master, "split"));
        Ok(SplitConfig::new(s.fraction_opt.unwrap_or(SplitConfig::DEFAULT_FRACTION_OPT), seed)?)
    }

    pub fn betting_config(&self) -> Result<BettingConfig> {
        match self.betting {
            None => Ok(BettingConfig::default()),
            Some(b) => {
                let strategy = match b.strategy {
                    BettingChoice::Adaptive => BettingStrategy::Adaptive,
                    BettingChoice::Constant(mu) => BettingStrategy::Constant(mu),
                };
                Ok(BettingConfig::new(strategy, b.clip)?)
            }
        }
    }

    pub fn policy_config(&self) -> Result<AcquisitionPolicy> {
        match self.policy {
            None => Ok(AcquisitionPolicy::default()),
            Some(p) => {
                let base = match p.kind {
                    PolicyKind::Uniform => AcquisitionPolicy::uniform(),
                    PolicyKind::EpsilonGreedy { epsilon } => AcquisitionPolicy::epsilon_greedy(epsilon)?,
                };
                match p.queries_per_round {
                    Some(k) => Ok(base.with_queries_per_round(k)?),
                    None => Ok(base),
                }
            }
        }
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        self.stopping.unwrap_or_default()
    }

    pub fn guarantee(&self) -> GuaranteeKind {
        self.method.info().guarantee
    }
}

pub fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        Err(HarnessError::config(format!("trials = {trials}; at least {MIN_TRIALS} are required")))
    } else {
        Ok(())
    }
}
