//! Round weights, polynomial partial sums, the regularizer schedule and the
//! moving-average step-size estimator.

use rand::Rng;

use crate::error::{MobilError, Result};

/// Growth law used by the regularizer schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvexityMode {
    /// Per-round losses supply curvature; cumulative regularization grows as n^{p+1/2}.
    #[default]
    StronglyConvex,
    /// Losses are only convex; cumulative regularization grows as n^k.
    Convex,
}

impl ConvexityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConvexityMode::StronglyConvex => "strongly_convex",
            ConvexityMode::Convex => "convex",
        }
    }
}

impl std::str::FromStr for ConvexityMode {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strongly_convex" => Ok(ConvexityMode::StronglyConvex),
            "convex" => Ok(ConvexityMode::Convex),
            other => Err(MobilError::invalid(format!("unknown convexity mode `{other}`"))),
        }
    }
}

/// Weights w_n = n^p together with the regularizer growth law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSchedule {
    pub p: f64,
    pub mode: ConvexityMode,
    /// Growth exponent for [`ConvexityMode::Convex`]; `None` means p + 1/2.
    pub k: Option<f64>,
}

impl WeightSchedule {
    pub fn new(p: f64) -> Self {
        WeightSchedule { p, mode: ConvexityMode::StronglyConvex, k: None }
    }

    pub fn convex(p: f64, k: f64) -> Self {
        WeightSchedule { p, mode: ConvexityMode::Convex, k: Some(k) }
    }

    pub fn weight(&self, n: usize) -> f64 {
        (n as f64).powf(self.p)
    }

    /// Exponent of n in the cumulative regularization.
    pub fn growth_exponent(&self) -> f64 {
        match self.mode {
            ConvexityMode::StronglyConvex => self.p + 0.5,
            ConvexityMode::Convex => self.k.unwrap_or(self.p + 0.5),
        }
    }
}

/// How the base step scale reacts to the moving-average error norm λ_n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaMode {
    /// η_n = η.
    Fixed,
    /// η_n = η λ_n.
    #[default]
    Scaled,
    /// η_n = η / λ_n.
    Normalized,
}

impl EtaMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EtaMode::Fixed => "fixed",
            EtaMode::Scaled => "scaled",
            EtaMode::Normalized => "normalized",
        }
    }
}

impl std::str::FromStr for EtaMode {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(EtaMode::Fixed),
            "scaled" => Ok(EtaMode::Scaled),
            "normalized" => Ok(EtaMode::Normalized),
            other => Err(MobilError::invalid(format!("unknown eta mode `{other}`"))),
        }
    }
}

/// Smallest λ used when forming η_n, so a vanishing error never produces η_n = 0.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStepConfig {
    pub eta: f64,
    pub c: f64,
    pub beta: f64,
    pub mode: EtaMode,
}

impl Default for AdaptiveStepConfig {
    fn default() -> Self {
        AdaptiveStepConfig { eta: 0.01, c: 0.1, beta: 0.999, mode: EtaMode::Scaled }
    }
}

impl AdaptiveStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(MobilError::invalid("eta must be positive"));
        }
        if !(self.c >= 0.0) {
            return Err(MobilError::invalid("c must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(MobilError::invalid("beta must lie in [0, 1)"));
        }
        Ok(())
    }

    /// η_n for the current bias-corrected λ_n.
    pub fn eta_n(&self, lambda: f64) -> f64 {
        let lambda = lambda.max(LAMBDA_FLOOR);
        match self.mode {
            EtaMode::Fixed => self.eta,
            EtaMode::Scaled => self.eta * lambda,
            EtaMode::Normalized => self.eta / lambda,
        }
    }
}

/// Moving-average state for λ_n.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepState {
    pub lambda_bar: f64,
    pub count: u64,
}

impl StepState {
    /// Folds in one error norm and returns the bias-corrected λ_n.
    pub fn observe(&mut self, err_norm: f64, beta: f64) -> f64 {
        let (next, lambda) = adaptive_lambda(*self, err_norm, beta);
        *self = next;
        lambda
    }
}

pub fn weight(n: usize, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(MobilError::invalid("round index must be at least 1"));
    }
    Ok((n as f64).powf(p))
}

/// Σ_{n=1}^N n^p by direct summation.
pub fn weight_prefix_sum(big_n: usize, p: f64) -> Result<f64> {
    if big_n == 0 {
        return Err(MobilError::invalid("N must be at least 1"));
    }
    Ok((1..=big_n).map(|n| (n as f64).powf(p)).sum())
}

/// Analytic lower and upper estimates of Σ_{n=1}^N n^p, or `None` when p < −1.
pub fn poly_sum_bracket(big_n: usize, p: f64) -> Option<(f64, f64)> {
    let n = big_n as f64;
    if p > 0.0 {
        Some((n.powf(p + 1.0) / (p + 1.0), (n + 1.0).powf(p + 1.0) / (p + 1.0)))
    } else if p == 0.0 {
        Some((n, n))
    } else if p > -1.0 {
        let lo = ((n + 1.0).powf(p + 1.0) - 1.0) / (p + 1.0);
        let hi = (n.powf(p + 1.0) + p) / (p + 1.0);
        Some((lo, hi))
    } else if p == -1.0 {
        Some(((n + 1.0).ln(), n.ln() + 1.0))
    } else {
        None
    }
}

/// Draws K in 1..=N with probability proportional to the weights.
pub fn sample_output_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.is_empty() {
        return Err(MobilError::invalid("weight list is empty"));
    }
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(MobilError::invalid(format!("weight {} is not positive", i + 1)));
    }
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i + 1);
        }
    }
    Ok(weights.len())
}

pub fn adaptive_lambda(state: StepState, err_norm: f64, beta: f64) -> (StepState, f64) {
    let lambda_bar = beta * state.lambda_bar + (1.0 - beta) * err_norm;
    let count = state.count + 1;
    let correction = 1.0 - beta.powi(count as i32);
    let lambda = if correction > 0.0 { lambda_bar / correction } else { err_norm };
    (StepState { lambda_bar, count }, lambda)
}

/// Cumulative regularization S(n) = (1 + c n^e)/η with S(0) = 0.
pub fn cumulative_regularization(n: usize, schedule: &WeightSchedule, c: f64, eta: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1.0 + c * (n as f64).powf(schedule.growth_exponent())) / eta
}

/// Per-round regularizer coefficient S(n) − S(n−1), both evaluated with the current η_n.
pub fn regularizer_coeff_schedule(
    n: usize,
    schedule: &WeightSchedule,
    step: &AdaptiveStepConfig,
    eta_n: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(MobilError::invalid("round index must be at least 1"));
    }
    if !(eta_n > 0.0) || !eta_n.is_finite() {
        return Err(MobilError::invalid("eta_n must be positive and finite"));
    }
    let inc = cumulative_regularization(n, schedule, step.c, eta_n)
        - cumulative_regularization(n - 1, schedule, step.c, eta_n);
    Ok(inc.max(0.0))
}
