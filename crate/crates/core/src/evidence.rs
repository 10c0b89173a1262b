//! Per-candidate evidence against the null "this candidate is unreliable".
//!
//! Fixed-sample evidence is a [`PValue`]; sequential evidence is an
//! [`EProcessState`], a betting wealth process that is a nonnegative
//! supermartingale with initial value 1 whenever the true risk is at or
//! above the threshold.

use alloc::vec::Vec;

use crate::risk::check_open_unit;
use crate::{binomial, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PValueMethod {
    Hoeffding,
    BinomialQuantile,
    Combined,
    /// Supplied by the caller.
    External,
}

/// Which calibration samples a piece of evidence was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DataSplit {
    Full,
    Optimization,
    Testing,
}

impl DataSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSplit::Full => "full",
            DataSplit::Optimization => "optimization",
            DataSplit::Testing => "testing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PValue {
    value: f64,
    pub method: PValueMethod,
    pub split: DataSplit,
}

impl PValue {
    pub fn new(value: f64, method: PValueMethod, split: DataSplit) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidParameter { name: "p-value", value, expected: "[0, 1]" });
        }
        Ok(Self { value, method, split })
    }

    /// A caller-supplied p-value computed on the full calibration set.
    pub fn external(value: f64) -> Result<Self> {
        Self::new(value, PValueMethod::External, DataSplit::Full)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn on_split(self, split: DataSplit) -> Self {
        Self { split, ..self }
    }
}

/// Hoeffding p-value for the average-risk null `R(lambda) >= alpha`:
/// `exp(-2 n ((alpha - r_hat)_+)^2)`.
pub fn hoeffding_p_value(n: usize, alpha: f64, r_hat: f64) -> Result<PValue> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    for (name, v) in [("threshold", alpha), ("empirical risk", r_hat)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter { name, value: v, expected: "[0, 1]" });
        }
    }
    let gap = (alpha - r_hat).max(0.0);
    let value = if gap == 0.0 { 1.0 } else { libm::exp(-2.0 * n as f64 * gap * gap) };
    PValue::new(value, PValueMethod::Hoeffding, DataSplit::Full)
}

/// Exact p-value for the quantile null `R_q(lambda) >= alpha` from the
/// number `k` of losses at or above `alpha` among `n`.
///
/// Under the null each loss exceeds `alpha` with probability at least
/// `1 - q`, so `k` is stochastically larger than `Bin(n, 1 - q)` and the
/// lower tail `P[Bin(n, 1 - q) <= k]` is a valid p-value.
pub fn quantile_p_value(k: usize, n: usize, q: f64) -> Result<PValue> {
    if k > n {
        return Err(Error::CountExceedsTotal { count: k, total: n });
    }
    check_open_unit("quantile level", q)?;
    let value = binomial::cdf(k as u64, n as u64, 1.0 - q)?;
    PValue::new(value, PValueMethod::BinomialQuantile, DataSplit::Full)
}

/// Maximum of the component p-values: valid for the union null "some
/// controlled objective is violated". All components must come from the
/// same data split.
pub fn combine_p_values(ps: &[PValue]) -> Result<PValue> {
    let first = ps.first().ok_or(Error::EmptySample)?;
    let mut value = first.value;
    for p in &ps[1..] {
        if p.split != first.split {
            return Err(Error::ProvenanceViolation {
                candidate: alloc::string::String::new(),
                expected: first.split.as_str(),
                found: p.split.as_str(),
            });
        }
        value = value.max(p.value);
    }
    PValue::new(value, PValueMethod::Combined, first.split)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BettingStrategy {
    /// Same bet every step (clipped to the ceiling).
    Constant(f64),
    /// Plug-in growth-rate bet `(alpha - mean) / (second moment + eps)`.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BettingConfig {
    pub strategy: BettingStrategy,
    /// Fraction of the positivity bound `1 / (1 - alpha)` a bet may use.
    pub clip: f64,
}

impl Default for BettingConfig {
    fn default() -> Self {
        Self { strategy: BettingStrategy::Adaptive, clip: Self::DEFAULT_CLIP }
    }
}

impl BettingConfig {
    pub const DEFAULT_CLIP: f64 = 0.5;
    const EPS: f64 = 1e-6;

    pub fn new(strategy: BettingStrategy, clip: f64) -> Result<Self> {
        check_open_unit("clip ceiling", clip)?;
        if let BettingStrategy::Constant(mu) = strategy {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "constant bet",
                    value: mu,
                    expected: "a finite nonnegative value",
                });
            }
        }
        Ok(Self { strategy, clip })
    }

    pub fn constant(mu: f64) -> Result<Self> {
        Self::new(BettingStrategy::Constant(mu), Self::DEFAULT_CLIP)
    }

    /// Largest admissible bet; keeps every factor at least `1 - clip`.
    pub fn ceiling(&self, alpha: f64) -> f64 {
        self.clip / (1.0 - alpha)
    }
}

/// Wealth of the betting process `prod_t (1 + mu_t (alpha - loss_t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EProcessState {
    wealth: f64,
    /// Tracked alongside `wealth` so positivity and replay checks survive
    /// floating-point underflow of long losing streaks.
    log_wealth: f64,
    t: u64,
    mean_loss: f64,
    mean_sq: f64,
    alpha: f64,
    betting: BettingConfig,
}

/// One consumed observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub bet: f64,
    pub loss: f64,
    pub factor: f64,
}

impl EProcessState {
    pub fn new(alpha: f64, betting: BettingConfig) -> Result<Self> {
        check_open_unit("threshold", alpha)?;
        check_open_unit("clip ceiling", betting.clip)?;
        Ok(Self { wealth: 1.0, log_wealth: 0.0, t: 0, mean_loss: 0.0, mean_sq: 0.0, alpha, betting })
    }

    /// State with a given wealth and no history, for evaluating decision
    /// rules on externally tracked wealth.
    pub fn with_wealth(alpha: f64, betting: BettingConfig, wealth: f64) -> Result<Self> {
        if wealth.is_nan() || wealth < 0.0 {
            return Err(Error::InvalidParameter { name: "wealth", value: wealth, expected: ">= 0" });
        }
        let mut s = Self::new(alpha, betting)?;
        s.wealth = wealth;
        s.log_wealth = libm::log(wealth);
        Ok(s)
    }

    pub fn wealth(&self) -> f64 {
        self.wealth
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mean_loss(&self) -> f64 {
        self.mean_loss
    }

    pub fn betting(&self) -> &BettingConfig {
        &self.betting
    }

    /// Bet for the next observation. Depends only on observations already
    /// consumed.
    pub fn next_bet(&self) -> f64 {
        let ceiling = self.betting.ceiling(self.alpha);
        let raw = match self.betting.strategy {
            BettingStrategy::Constant(mu) => mu,
            BettingStrategy::Adaptive if self.t == 0 => 0.0,
            BettingStrategy::Adaptive => {
                (self.alpha - self.mean_loss) / (self.mean_sq + BettingConfig::EPS)
            }
        };
        raw.clamp(0.0, ceiling)
    }

    /// Consumes one loss in place.
    pub fn observe(&mut self, loss: f64) -> Result<Step> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::InvalidParameter { name: "loss", value: loss, expected: "[0, 1]" });
        }
        let bet = self.next_bet();
        let increment = bet * (self.alpha - loss);
        let factor = 1.0 + increment;
        self.wealth *= factor;
        self.log_wealth += libm::log1p(increment);
        self.t += 1;
        let t = self.t as f64;
        let centered = self.alpha - loss;
        self.mean_loss += (loss - self.mean_loss) / t;
        self.mean_sq += (centered * centered - self.mean_sq) / t;
        Ok(Step { bet, loss, factor })
    }

    /// Rebuilds a state from its full observation history.
    pub fn replay(alpha: f64, betting: BettingConfig, losses: &[f64]) -> Result<Self> {
        let mut s = Self::new(alpha, betting)?;
        for &l in losses {
            s.observe(l)?;
        }
        Ok(s)
    }
}

/// Functional form of [`EProcessState::observe`].
pub fn eprocess_update(state: &EProcessState, loss: f64) -> Result<EProcessState> {
    let mut next = *state;
    next.observe(loss)?;
    Ok(next)
}

/// Ville threshold for `m` hypotheses at family level `delta`.
pub fn ville_threshold(delta: f64, m: usize) -> f64 {
    m as f64 / delta
}

/// Rejects once wealth reaches `m / delta`. By Ville's inequality each true
/// null crosses with probability at most `delta / m` over the whole
/// trajectory; a union bound gives FWER at most `delta` at any stopping
/// time.
pub fn ville_reject(state: &EProcessState, delta: f64, m: usize) -> bool {
    debug_assert!(delta > 0.0 && delta < 1.0 && m >= 1);
    state.wealth >= ville_threshold(delta, m)
}

/// Product of logged factors, for audit replays.
pub fn factor_product(steps: &[Step]) -> f64 {
    steps.iter().map(|s| s.factor).product()
}

/// Losses of a step log.
pub fn step_losses(steps: &[Step]) -> Vec<f64> {
    steps.iter().map(|s| s.loss).collect()
}
