//! Synthetic scenarios with known ground-truth risks.

use hypersel_core::risk::{CandidateSet, LossTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaLaw, ContinuousCDF, Normal};

use crate::error::{HarnessError, Result};

pub const DEFAULT_QUANTILE: f64 = 0.9;

/// Log-normal delay `D = exp(location + scale * Z)`; the loss is `min(D, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    pub location: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// 0/1 losses; `means[candidate][objective]`.
    Bernoulli { means: Vec<Vec<f64>> },
    /// One objective; `params[candidate] = [a, b]`.
    Beta { params: Vec<[f64; 2]> },
    /// One objective of clipped log-normal delays.
    DelayHeavyTail { candidates: Vec<DelayParams> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub generator: Generator,
    pub n_samples: usize,
    /// Quantile level of the annotated quantile risks.
    #[serde(default = "default_q")]
    pub quantile_q: f64,
    /// Fixes the dataset; when absent the run's master seed decides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_q() -> f64 {
    DEFAULT_QUANTILE
}

/// True per-candidate, per-objective risks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub candidates: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub quantile_q: f64,
    pub quantile: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub candidates: CandidateSet,
    pub table: LossTable,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
enum Law {
    Bernoulli(f64),
    Beta(Beta<f64>),
    Delay(LogNormal<f64>),
}

impl Law {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Beta(b) => b.sample(rng),
            Law::Delay(d) => d.sample(rng).min(1.0),
        }
    }
}

/// Loss sampler for a scenario's candidates and objectives.
#[derive(Debug, Clone)]
pub struct Sampler {
    laws: Vec<Vec<Law>>,
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, candidate: usize, objective: usize, rng: &mut R) -> f64 {
        self.laws[candidate][objective].draw(rng)
    }

    pub fn n_candidates(&self) -> usize {
        self.laws.len()
    }

    pub fn n_objectives(&self) -> usize {
        self.laws[0].len()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn invalid(msg: String) -> HarnessError {
    HarnessError::config(format!("scenario: {msg}"))
}

impl ScenarioSpec {
    pub fn n_candidates(&self) -> usize {
        match &self.generator {
            Generator::Bernoulli { means } => means.len(),
            Generator::Beta { params } => params.len(),
            Generator::DelayHeavyTail { candidates } => candidates.len(),
        }
    }

    pub fn n_objectives(&self) -> usize {
        match &self.generator {
            Generator::Bernoulli { means } => means.first().map_or(0, Vec::len),
            _ => 1,
        }
    }

    pub fn candidate_set(&self) -> CandidateSet {
        CandidateSet::numbered(self.n_candidates())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_candidates() == 0 {
            return Err(invalid("no candidates".into()));
        }
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(invalid(format!("quantile_q {} outside (0, 1)", self.quantile_q)));
        }
        match &self.generator {
            Generator::Bernoulli { means } => {
                let l = self.n_objectives();
                if l == 0 {
                    return Err(invalid("bernoulli needs at least one objective".into()));
                }
                for (c, row) in means.iter().enumerate() {
                    if row.len() != l {
                        return Err(invalid(format!("candidate {c} has {} objectives, expected {l}", row.len())));
                    }
                    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                        return Err(invalid(format!("bernoulli mean {p} outside [0, 1]")));
                    }
                }
            }
            Generator::Beta { params } => {
                if let Some([a, b]) = params.iter().find(|[a, b]| !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0)) {
                    return Err(invalid(format!("beta parameters ({a}, {b}) must be positive")));
                }
            }
            Generator::DelayHeavyTail { candidates } => {
                if let Some(d) = candidates.iter().find(|d| !(d.location.is_finite() && d.scale.is_finite() && d.scale > 0.0)) {
                    return Err(invalid(format!("delay location {} / scale {} invalid", d.location, d.scale)));
                }
            }
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        let laws = match &self.generator {
            Generator::Bernoulli { means } => {
                means.iter().map(|row| row.iter().map(|&p| Law::Bernoulli(p)).collect()).collect()
            }
            Generator::Beta { params } => params
                .iter()
                .map(|&[a, b]| Ok(vec![Law::Beta(Beta::new(a, b).map_err(|e| invalid(e.to_string()))?)]))
                .collect::<Result<_>>()?,
            Generator::DelayHeavyTail { candidates } => candidates
                .iter()
                .map(|d| Ok(vec![Law::Delay(LogNormal::new(d.location, d.scale).map_err(|e| invalid(e.to_string()))?)]))
                .collect::<Result<_>>()?,
        };
        Ok(Sampler { laws })
    }

    /// Exact mean loss.
    pub fn true_mean(&self, candidate: usize, objective: usize) -> f64 {
        match &self.generator {
            Generator::Bernoulli { means } => means[candidate][objective],
            Generator::Beta { params } => {
                let [a, b] = params[candidate];
                a / (a + b)
            }
            Generator::DelayHeavyTail { candidates } => {
                // E[min(D, 1)] = E[D; D < 1] + P(D >= 1)
                let DelayParams { location: mu, scale: s } = candidates[candidate];
                let n = std_normal();
                (mu + 0.5 * s * s).exp() * n.cdf(-mu / s - s) + n.cdf(mu / s)
            }
        }
    }

    /// `inf { r : P(loss <= r) >= q }`.
    pub fn true_quantile(&self, candidate: usize, objective: usize, q: f64) -> f64 {
        match &self.generator {
            Generator::Bernoulli { means } => {
                if 1.0 - means[candidate][objective] >= q {
                    0.0
                } else {
                    1.0
                }
            }
            Generator::Beta { params } => {
                let [a, b] = params[candidate];
                BetaLaw::new(a, b).expect("validated").inverse_cdf(q)
            }
            Generator::DelayHeavyTail { candidates } => {
                let d = candidates[candidate];
                (d.location + d.scale * std_normal().inverse_cdf(q)).exp().min(1.0)
            }
        }
    }

    pub fn truth(&self) -> GroundTruth {
        self.truth_at(self.quantile_q)
    }

    pub fn truth_at(&self, q: f64) -> GroundTruth {
        let (m, l) = (self.n_candidates(), self.n_objectives());
        GroundTruth {
            candidates: self.candidate_set().ids().map(String::from).collect(),
            mean: (0..m).map(|c| (0..l).map(|o| self.true_mean(c, o)).collect()).collect(),
            quantile_q: q,
            quantile: (0..m).map(|c| (0..l).map(|o| self.true_quantile(c, o, q)).collect()).collect(),
        }
    }

    /// Draws a table from `seed`, cell order candidate, objective, sample.
    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        let sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = LossTable::from_fn(self.n_samples, self.n_candidates(), self.n_objectives(), |_, c, o| {
            sampler.draw(c, o, &mut rng)
        })?;
        Ok(Scenario { candidates: self.candidate_set(), table, truth: self.truth() })
    }
}

/// Generates with the spec's own seed, or `fallback_seed` if it has none.
pub fn generate_synthetic(spec: &ScenarioSpec, fallback_seed: u64) -> Result<Scenario> {
    spec.generate(spec.seed.unwrap_or(fallback_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypersel_core::risk::{empirical_average_risk, empirical_quantile};

    fn spec(generator: Generator, n: usize) -> ScenarioSpec {
        ScenarioSpec { generator, n_samples: n, quantile_q: 0.9, seed: None }
    }

    #[test]
    fn bernoulli_means_converge() {
        let s = spec(Generator::Bernoulli { means: vec![vec![0.1], vec![0.3]] }, 100_000);
        let sc = s.generate(3).unwrap();
        for (c, want) in [(0, 0.1), (1, 0.3)] {
            let got = empirical_average_risk(sc.table.losses(c, 0)).unwrap();
            assert!((got - want).abs() < 0.005, "{got} vs {want}");
        }
        assert_eq!(s.generate(9).unwrap().table, s.generate(9).unwrap().table);
        assert_ne!(s.generate(9).unwrap().table, s.generate(10).unwrap().table);
    }

    #[test]
    fn bernoulli_quantile_is_a_step() {
        let s = spec(Generator::Bernoulli { means: vec![vec![0.05], vec![0.2]] }, 10);
        assert_eq!(s.true_quantile(0, 0, 0.9), 0.0);
        assert_eq!(s.true_quantile(1, 0, 0.9), 1.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(spec(Generator::Bernoulli { means: vec![vec![1.5]] }, 10).validate().is_err());
        assert!(spec(Generator::Bernoulli { means: vec![vec![0.5], vec![0.5, 0.1]] }, 10).validate().is_err());
        assert!(spec(Generator::Beta { params: vec![[0.0, 1.0]] }, 10).validate().is_err());
        let bad = DelayParams { location: 0.0, scale: -1.0 };
        assert!(spec(Generator::DelayHeavyTail { candidates: vec![bad] }, 10).validate().is_err());
        assert!(spec(Generator::Beta { params: vec![] }, 10).validate().is_err());
    }

    /// Closed-form and inverted risks against ten million draws.
    #[test]
    fn annotations_match_large_simulation() {
        let n = 10_000_000;
        let specs = [
            spec(Generator::Beta { params: vec![[2.0, 5.0]] }, n),
            spec(Generator::DelayHeavyTail { candidates: vec![DelayParams { location: 0.08f64.ln(), scale: 1.2 }] }, n),
            spec(Generator::DelayHeavyTail { candidates: vec![DelayParams { location: 0.5f64.ln(), scale: 1.0 }] }, n),
        ];
        for (k, s) in specs.iter().enumerate() {
            let sampler = s.sampler().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let draws: Vec<f64> = (0..n).map(|_| sampler.draw(0, 0, &mut rng)).collect();
            let mean = empirical_average_risk(&draws).unwrap();
            assert!((mean - s.true_mean(0, 0)).abs() < 1e-3, "mean {k}: {mean} vs {}", s.true_mean(0, 0));
            for q in [0.5, 0.9] {
                let emp = empirical_quantile(&draws, q).unwrap();
                let want = s.true_quantile(0, 0, q);
                assert!((emp - want).abs() < 1e-3, "quantile {k} at {q}: {emp} vs {want}");
            }
        }
    }
}
