//! Monte Carlo certification of a method's error-rate guarantee against
//! scenario ground truth.

use std::collections::BTreeMap;

use hypersel_core::seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::check_trials;
use crate::error::{HarnessError, Result};
use crate::registry::{GuaranteeKind, Measure, Method};
use crate::run::{data_seed, Data, Runner};
use crate::scenario::ScenarioSpec;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
/// Fractional successes are accepted (mean of [0, 1] outcomes times `n`).
pub fn wilson_interval(successes: f64, n: usize, z: f64) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let n = n as f64;
    let p = (successes / n).clamp(0.0, 1.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

pub const Z95: f64 = 1.959_963_984_540_054;

/// An empirical error rate is consistent with a bound `delta` when its
/// three-sigma Wilson interval reaches down to `delta`.
pub fn within_three_sigma(errors: f64, trials: usize, delta: f64) -> bool {
    wilson_interval(errors, trials, 3.0)[0] <= delta
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub method: Method,
    pub guarantee: GuaranteeKind,
    pub measure: Measure,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub n_candidates: usize,
    /// Candidates whose true risks meet every constraint.
    pub reliable: Vec<String>,
    /// Trials that selected at least one unreliable candidate.
    pub trials_with_false_selection: usize,
    /// Sum over trials of false selections / max(selections, 1).
    pub false_discovery_proportion_sum: f64,
    /// Error count behind the certified rate: the first field for FWER, the
    /// second for FDR.
    pub error_total: f64,
    pub empirical_rate: f64,
    pub wilson_95: [f64; 2],
    pub wilson_3_sigma: [f64; 2],
    pub certified: bool,
    /// Mean over trials of the fraction of reliable candidates selected.
    pub power: f64,
    pub selection_sizes: Vec<usize>,
    pub false_selections: Vec<usize>,
    pub selection_counts: BTreeMap<String, usize>,
}

impl ValidationReport {
    /// Recomputes the rates from the per-trial counts.
    pub fn counts_consistent(&self) -> bool {
        let fwer = self.false_selections.iter().filter(|&&f| f > 0).count();
        let fdp: f64 = self
            .false_selections
            .iter()
            .zip(&self.selection_sizes)
            .map(|(&f, &s)| f as f64 / s.max(1) as f64)
            .sum();
        let total = match self.guarantee {
            GuaranteeKind::Fwer => fwer as f64,
            GuaranteeKind::Fdr => fdp,
        };
        self.false_selections.len() == self.trials
            && fwer == self.trials_with_false_selection
            && fdp == self.false_discovery_proportion_sum
            && total == self.error_total
            && self.empirical_rate == total / self.trials as f64
    }
}

#[derive(Debug, Clone)]
struct Trial {
    selected: Vec<usize>,
    false_count: usize,
    true_count: usize,
}

/// Indicator per candidate: true risks below every configured threshold.
pub fn reliable_mask(runner: &Runner, spec: &ScenarioSpec) -> Vec<bool> {
    let cfg = &runner.cfg;
    (0..spec.n_candidates())
        .map(|c| {
            cfg.alphas.iter().enumerate().all(|(o, &a)| {
                let risk = match cfg.quantile_q {
                    Some(q) => spec.true_quantile(c, o, q),
                    None => spec.true_mean(c, o),
                };
                risk < a
            })
        })
        .collect()
}

/// Runs the configured method on `trials` fresh datasets. Trial `t` uses
/// seeds derived from `(master, t)` only, so results do not depend on
/// `jobs`.
pub fn monte_carlo_validate(
    runner: &Runner,
    spec: &ScenarioSpec,
    certify: Option<GuaranteeKind>,
    trials: usize,
    master: u64,
    jobs: usize,
) -> Result<ValidationReport> {
    let cfg = &runner.cfg;
    let info = cfg.method.info();
    let guarantee = certify.unwrap_or(info.guarantee);
    if guarantee != info.guarantee {
        return Err(HarnessError::config(format!(
            "{} controls {}, not {}",
            info.name,
            info.guarantee.as_str(),
            guarantee.as_str()
        )));
    }
    check_trials(trials)?;
    spec.validate()?;
    let reliable = reliable_mask(runner, spec);
    let ids: Vec<String> = spec.candidate_set().ids().map(String::from).collect();
    let root = seed::derive_named(master, "trials");
    let run_trial = |t: usize| -> Result<Trial> {
        let trial_seed = seed::derive(root, t as u64);
        let data = Data::from_scenario(spec, cfg.method, data_seed(trial_seed))?;
        let out = runner.calibrate(&data, trial_seed)?;
        let cands = data.candidates();
        let selected: Vec<usize> = out
            .selection
            .selected
            .iter()
            .map(|id| cands.index_of(id).ok_or_else(|| HarnessError::Invariant(format!("unknown selection {id}"))))
            .collect::<Result<_>>()?;
        let false_count = selected.iter().filter(|&&c| !reliable[c]).count();
        Ok(Trial { true_count: selected.len() - false_count, false_count, selected })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Invariant(format!("thread pool: {e}")))?;
    let results: Vec<Trial> = pool.install(|| (0..trials).into_par_iter().map(run_trial).collect::<Result<_>>())?;

    let n_reliable = reliable.iter().filter(|&&r| r).count();
    let mut counts = vec![0usize; ids.len()];
    let (mut fwer, mut fdp, mut power) = (0usize, 0.0f64, 0.0f64);
    for r in &results {
        for &c in &r.selected {
            counts[c] += 1;
        }
        fwer += usize::from(r.false_count > 0);
        fdp += r.false_count as f64 / r.selected.len().max(1) as f64;
        if n_reliable > 0 {
            power += r.true_count as f64 / n_reliable as f64;
        }
    }
    let error_total = match guarantee {
        GuaranteeKind::Fwer => fwer as f64,
        GuaranteeKind::Fdr => fdp,
    };
    let wilson_3_sigma = wilson_interval(error_total, trials, 3.0);
    Ok(ValidationReport {
        method: cfg.method,
        guarantee,
        measure: info.measure,
        delta: cfg.delta,
        trials,
        seed: master,
        n_candidates: ids.len(),
        reliable: ids.iter().zip(&reliable).filter(|(_, &r)| r).map(|(id, _)| id.clone()).collect(),
        trials_with_false_selection: fwer,
        false_discovery_proportion_sum: fdp,
        error_total,
        empirical_rate: error_total / trials as f64,
        wilson_95: wilson_interval(error_total, trials, Z95),
        wilson_3_sigma,
        certified: wilson_3_sigma[0] <= cfg.delta,
        power: power / trials as f64,
        selection_sizes: results.iter().map(|r| r.selected.len()).collect(),
        false_selections: results.iter().map(|r| r.false_count).collect(),
        selection_counts: ids.into_iter().zip(counts).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::scenario::Generator;

    #[test]
    fn wilson_reference_values() {
        // 10 of 100 at z = 1.96: standard reference values
        let [lo, hi] = wilson_interval(10.0, 100, Z95);
        assert!((lo - 0.055_229_3).abs() < 1e-6, "{lo}");
        assert!((hi - 0.174_366_2).abs() < 1e-6, "{hi}");
        let [lo, hi] = wilson_interval(0.0, 50, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.071_348_4).abs() < 1e-6, "{hi}");
    }

    fn bernoulli(means: &[f64], n: usize) -> ScenarioSpec {
        ScenarioSpec {
            generator: Generator::Bernoulli { means: means.iter().map(|&p| vec![p]).collect() },
            n_samples: n,
            quantile_q: 0.9,
            seed: None,
        }
    }

    #[test]
    fn guarantee_mismatch_and_trial_floor() {
        let runner = Runner::new(RunConfig::new(Method::Ltt, 0.1, vec![0.2])).unwrap();
        let spec = bernoulli(&[0.1], 50);
        let e = monte_carlo_validate(&runner, &spec, Some(GuaranteeKind::Fdr), 200, 0, 1).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(monte_carlo_validate(&runner, &spec, None, 99, 0, 1).is_err());
    }

    #[test]
    fn no_reliable_candidates_means_zero_power() {
        let runner = Runner::new(RunConfig::new(Method::Ltt, 0.1, vec![0.2])).unwrap();
        let r = monte_carlo_validate(&runner, &bernoulli(&[0.2, 0.5], 100), None, 100, 4, 1).unwrap();
        assert!(r.reliable.is_empty());
        assert_eq!(r.power, 0.0);
        assert!(r.counts_consistent());
    }

    #[test]
    fn parallel_equals_serial() {
        let runner = Runner::new(RunConfig::new(Method::Ltt, 0.2, vec![0.3])).unwrap();
        let spec = bernoulli(&[0.1, 0.25, 0.3, 0.5], 80);
        let a = monte_carlo_validate(&runner, &spec, None, 150, 9, 1).unwrap();
        let b = monte_carlo_validate(&runner, &spec, None, 150, 9, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.counts_consistent());
        assert!(a.power > 0.5);
    }
}
