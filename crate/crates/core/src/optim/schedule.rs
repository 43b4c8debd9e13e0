use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Step-size sequence `s_k`, defined for `k ≥ 1`.
#[derive(Clone)]
pub enum StepRule {
    Constant(f64),
    /// `s₀ / k^p`.
    Power {
        s0: f64,
        exponent: f64,
    },
    /// `s₀ / (k + 1)^p`.
    ShiftedPower {
        s0: f64,
        exponent: f64,
    },
    /// Any other nonincreasing positive sequence; monotonicity is asserted at
    /// run time.
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::Constant(s) => write!(f, "Constant({s})"),
            StepRule::Power { s0, exponent } => write!(f, "{s0}/k^{exponent}"),
            StepRule::ShiftedPower { s0, exponent } => write!(f, "{s0}/(k+1)^{exponent}"),
            StepRule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl StepRule {
    /// `s_k`. Index 0 is mapped to index 1 so that lagged terms at the first
    /// iteration stay finite.
    pub fn at(&self, k: usize) -> f64 {
        let k = k.max(1);
        match self {
            StepRule::Constant(s) => *s,
            StepRule::Power { s0, exponent } => s0 / (k as f64).powf(*exponent),
            StepRule::ShiftedPower { s0, exponent } => s0 / (k as f64 + 1.0).powf(*exponent),
            StepRule::Custom(f) => f(k),
        }
    }

    fn validate(&self) -> Result<()> {
        let (s0, exponent) = match self {
            StepRule::Constant(s) => (*s, 0.0),
            StepRule::Power { s0, exponent } | StepRule::ShiftedPower { s0, exponent } => {
                (*s0, *exponent)
            }
            StepRule::Custom(_) => return Ok(()),
        };
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::Schedule(format!(
                "step size must be positive, got {s0}"
            )));
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::Schedule(format!(
                "step exponent must be >= 0 for a nonincreasing rule, got {exponent}"
            )));
        }
        Ok(())
    }
}

/// Minibatch size `N_k = clamp(round(c·k^p), min, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRule {
    pub coefficient: f64,
    pub exponent: f64,
    pub min: usize,
    pub max: Option<usize>,
}

impl BatchRule {
    pub fn constant(n: usize) -> Self {
        Self {
            coefficient: n as f64,
            exponent: 0.0,
            min: 1,
            max: None,
        }
    }

    /// `N_k = c·k^p`.
    pub fn power(coefficient: f64, exponent: f64) -> Self {
        Self {
            coefficient,
            exponent,
            min: 1,
            max: None,
        }
    }

    pub fn capped(mut self, max: usize) -> Self {
        self.max = Some(max);
        self
    }

    pub fn at(&self, k: usize) -> usize {
        let raw = (self.coefficient * (k.max(1) as f64).powf(self.exponent)).round();
        let n = if raw >= usize::MAX as f64 {
            usize::MAX
        } else {
            raw as usize
        };
        let n = n.max(self.min);
        match self.max {
            Some(m) => n.min(m),
            None => n,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.coefficient > 0.0 && self.coefficient.is_finite()) {
            return Err(Error::Schedule("batch coefficient must be positive".into()));
        }
        if !self.exponent.is_finite() {
            return Err(Error::Schedule("batch exponent must be finite".into()));
        }
        if self.min == 0 || self.max == Some(0) {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }
}

/// Batch sizes for the three estimates of one stochastic iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRules {
    pub x: BatchRule,
    pub x_prev: BatchRule,
    pub y: BatchRule,
}

impl BatchRules {
    pub fn uniform(rule: BatchRule) -> Self {
        Self {
            x: rule,
            x_prev: rule,
            y: rule,
        }
    }

    /// `N_k = 2k²` for all three estimates.
    pub fn quadratic_growth() -> Self {
        Self::uniform(BatchRule::power(2.0, 2.0))
    }

    pub fn at(&self, k: usize) -> (usize, usize, usize) {
        (self.x.at(k), self.x_prev.at(k), self.y.at(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Deterministic,
    Stochastic,
}

/// Parameter sequences `α_k`, `t_k`, `β_k = η√s_k/2`, `s_k` and batch sizes.
#[derive(Debug, Clone)]
pub struct ScheduleSet {
    alpha: f64,
    eta: f64,
    step: StepRule,
    batches: Option<BatchRules>,
    mode: Mode,
}

impl ScheduleSet {
    /// Exact/inexact deterministic schedule; `η ∈ (0, 1]`.
    pub fn deterministic(alpha: f64, eta: f64, step: StepRule) -> Result<Self> {
        check_alpha(alpha)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Schedule(format!(
                "eta must lie in (0, 1], got {eta}"
            )));
        }
        step.validate()?;
        Ok(Self {
            alpha,
            eta,
            step,
            batches: None,
            mode: Mode::Deterministic,
        })
    }

    /// Stochastic schedule; `η ∈ (0, 1)` so that `β_k < √s_k/2` strictly,
    /// unless `allow_boundary` is set.
    pub fn stochastic(
        alpha: f64,
        eta: f64,
        step: StepRule,
        batches: BatchRules,
        allow_boundary: bool,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let ok = if allow_boundary {
            eta > 0.0 && eta <= 1.0
        } else {
            eta > 0.0 && eta < 1.0
        };
        if !ok {
            return Err(Error::Schedule(format!(
                "eta must lie in (0, 1){} in stochastic mode, got {eta}",
                if allow_boundary { "]" } else { "" }
            )));
        }
        step.validate()?;
        for rule in [batches.x, batches.x_prev, batches.y] {
            rule.validate()?;
        }
        Ok(Self {
            alpha,
            eta,
            step,
            batches: Some(batches),
            mode: Mode::Stochastic,
        })
    }

    /// The same schedule with `β ≡ 0` (Nesterov/FISTA extrapolation).
    pub fn undamped(&self) -> Self {
        Self {
            eta: 0.0,
            ..self.clone()
        }
    }

    /// Checks `s_1 ≤ 1/L` (and hence `s_k ≤ 1/L` for the provided rules).
    pub fn validate_step_bound(&self, lipschitz: f64) -> Result<()> {
        let s1 = self.step(1);
        let bound = 1.0 / lipschitz;
        if s1 > bound * (1.0 + 1e-12) {
            return Err(Error::Schedule(format!(
                "step size s_1 = {s1} exceeds 1/L = {bound}"
            )));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn step_rule(&self) -> &StepRule {
        &self.step
    }

    pub fn batch_rules(&self) -> Option<&BatchRules> {
        self.batches.as_ref()
    }

    /// `α_k = 1 − α/k`, with `α_0 = 0`.
    pub fn alpha_k(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            1.0 - self.alpha / k as f64
        }
    }

    /// `t_k = (k − 1)/(α − 1)`, with `t_0 = 0`.
    pub fn t(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k - 1) as f64 / (self.alpha - 1.0)
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.step.at(k)
    }

    /// `s_k`, asserting that the rule has not increased since `k − 1`.
    pub fn checked_step(&self, k: usize) -> Result<f64> {
        let s = self.step(k);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Schedule(format!("s_{k} = {s} is not positive")));
        }
        if k > 1 {
            let prev = self.step(k - 1);
            if s > prev {
                return Err(Error::Schedule(format!(
                    "step rule increased at k = {k}: {prev} -> {s}"
                )));
            }
        }
        Ok(s)
    }

    /// `β_k = η√s_k/2`, with `β_0 = 0`.
    pub fn beta(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            0.5 * self.eta * self.step(k).sqrt()
        }
    }

    /// `(N^x_k, N^{x⁻}_k, N^y_k)`; `(1, 1, 1)` in deterministic mode.
    pub fn batch_sizes(&self, k: usize) -> (usize, usize, usize) {
        self.batches.map_or((1, 1, 1), |b| b.at(k))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 3.0 && alpha.is_finite()) {
        return Err(Error::Schedule(format!("alpha must be >= 3, got {alpha}")));
    }
    Ok(())
}
