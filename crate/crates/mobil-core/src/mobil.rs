//! MoBIL-Prox and MoBIL-VI updates, online model learning and predictive
//! gradient models.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{
    gain_to_vec, simulator_gradient_clipped, Benchmark, LinearDynamics, RunningNormalizer, SimulationMode,
    TransitionStats,
};
use crate::error::{MobilError, Result};
use crate::geometry::{gaussian_vector, FeasibleSet, Point};
use crate::online::{minimize_quadratic, AnchoredRegularizer, QuadraticLoss};
use crate::schedules::{cumulative_regularization, WeightSchedule};

/// Anything that predicts the next gradient ∇₂F̂(π, π) at a policy π.
pub trait GradientOracle {
    fn predict(&mut self, pi: &Point) -> Result<Point>;
}

impl<F> GradientOracle for F
where
    F: FnMut(&Point) -> Result<Point>,
{
    fn predict(&mut self, pi: &Point) -> Result<Point> {
        self(pi)
    }
}

/// State of the two-step MoBIL-Prox update.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxState {
    pub pi: Point,
    pub pi_hat: Point,
    pub grad_sum: Point,
    pub regularizer: AnchoredRegularizer,
    /// Prediction ĝ_n that was used to form π_n (zero before any prediction).
    pub g_hat: Point,
    pub n: usize,
}

impl ProxState {
    pub fn new(pi1: Point) -> Self {
        let d = pi1.len();
        ProxState {
            pi_hat: pi1.clone(),
            pi: pi1,
            grad_sum: Point::zeros(d),
            regularizer: AnchoredRegularizer::new(d),
            g_hat: Point::zeros(d),
            n: 1,
        }
    }
}

/// One MoBIL-Prox round.
///
/// Folds in w_n g_n and the regularizer w_n α_n μ_f anchored at π_n, then sets
/// π̂_{n+1} to the regularized leader, queries ĝ_{n+1} there and sets π_{n+1}
/// to the leader with the extra term w_{n+1}⟨ĝ_{n+1}, ·⟩.
pub fn mobil_prox_round(
    state: &mut ProxState,
    g_n: &Point,
    w_n: f64,
    reg_coeff: f64,
    w_next: f64,
    model: &mut dyn GradientOracle,
    set: &FeasibleSet,
) -> Result<()> {
    MobilError::check_dim(state.pi.len(), g_n.len())?;
    let anchor = state.pi.clone();
    state.regularizer.add(reg_coeff, &anchor)?;
    state.grad_sum += g_n * w_n;
    let pi_hat = state.regularizer.argmin(&state.grad_sum, set)?;
    let g_hat = model.predict(&pi_hat)?;
    MobilError::check_dim(pi_hat.len(), g_hat.len())?;
    let pi = state.regularizer.argmin(&(&state.grad_sum + &g_hat * w_next), set)?;
    state.pi_hat = pi_hat;
    state.pi = pi;
    state.g_hat = g_hat;
    state.n += 1;
    Ok(())
}

/// Settings of the damped fixed-point VI solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViSolver {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ViSolver {
    fn default() -> Self {
        ViSolver { damping: 0.5, tol: 1e-10, max_iter: 200 }
    }
}

/// MoBIL-VI: solves for π with ⟨Σ w_m ∇f_m(π) + w_{n+1} ∇₂F̂(π, π), π' − π⟩ ≥ 0.
pub fn mobil_vi_round(
    f_sum: &QuadraticLoss,
    model: &mut dyn GradientOracle,
    w_next: f64,
    set: &FeasibleSet,
    solver: ViSolver,
) -> Result<Point> {
    let mut pi = minimize_quadratic(f_sum, set)?;
    let mut residual = f64::INFINITY;
    for _ in 0..solver.max_iter {
        let g = model.predict(&pi)?;
        let mut lin = f_sum.clone();
        lin.add_linear(&g, w_next);
        let target = minimize_quadratic(&lin, set)?;
        let next = &pi * (1.0 - solver.damping) + &target * solver.damping;
        residual = (&next - &pi).norm();
        pi = next;
        if residual <= solver.tol {
            return Ok(pi);
        }
    }
    Err(MobilError::NotConverged { iterations: solver.max_iter, residual })
}

/// Smallest value of ⟨Φ(π), π' − π⟩ over the given probe points.
pub fn vi_residual(
    f_sum: &QuadraticLoss,
    model: &mut dyn GradientOracle,
    w_next: f64,
    pi: &Point,
    probes: &[Point],
) -> Result<f64> {
    let phi = f_sum.grad(pi) + model.predict(pi)? * w_next;
    Ok(probes.iter().map(|q| phi.dot(&(q - pi))).fold(f64::INFINITY, f64::min))
}

/// How the dynamics model is fit to past rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelUpdate {
    /// argmin of Σ (w_m/m) h̃_m.
    Ftl,
    /// Adds Σ b_m ‖Θ − Θ_m‖²/2 with Σ b_m = (1 + c n^k)/η.
    Ftrl { k: f64, c: f64, eta: f64 },
}

/// Online least-squares learner for Θ = [Â B̂].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLearnerState {
    pub zz_sum: DMatrix<f64>,
    pub yz_sum: DMatrix<f64>,
    pub weight_sum: f64,
    pub estimate: DMatrix<f64>,
    pub update: ModelUpdate,
    reg_total: f64,
    reg_anchor: DMatrix<f64>,
    rounds: usize,
}

impl ModelLearnerState {
    /// Starts from the zero model.
    pub fn new(state_dim: usize, action_dim: usize, update: ModelUpdate) -> Self {
        let dz = state_dim + action_dim;
        ModelLearnerState {
            zz_sum: DMatrix::zeros(dz, dz),
            yz_sum: DMatrix::zeros(state_dim, dz),
            weight_sum: 0.0,
            estimate: DMatrix::zeros(state_dim, dz),
            update,
            reg_total: 0.0,
            reg_anchor: DMatrix::zeros(state_dim, dz),
            rounds: 0,
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

/// Folds round-n statistics in with weight w_n/n and refits the model.
pub fn model_ftl_update(state: &mut ModelLearnerState, stats: &TransitionStats, n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(MobilError::invalid("round index must be at least 1"));
    }
    if stats.zz.shape() != state.zz_sum.shape() || stats.yz.shape() != state.yz_sum.shape() {
        return Err(MobilError::invalid("transition statistics have the wrong shape"));
    }
    let weight = (n as f64).powf(p) / n as f64;
    state.zz_sum += &stats.zz * weight;
    state.yz_sum += &stats.yz * weight;
    state.weight_sum += weight;
    state.rounds += 1;
    state.estimate = match state.update {
        ModelUpdate::Ftl => min_norm_solve(&state.zz_sum, &state.yz_sum),
        ModelUpdate::Ftrl { k, c, eta } => {
            let sched = WeightSchedule::convex(p - 1.0, k);
            let inc = (cumulative_regularization(n, &sched, c, eta) - cumulative_regularization(n - 1, &sched, c, eta)).max(0.0);
            state.reg_anchor += &state.estimate * inc;
            state.reg_total += inc;
            // Θ (2 Σ zz + b I) = 2 Σ yz + Σ b_m Θ_m
            let dz = state.zz_sum.nrows();
            let lhs = &state.zz_sum * 2.0 + DMatrix::identity(dz, dz) * state.reg_total;
            let rhs = &state.yz_sum * 2.0 + &state.reg_anchor;
            min_norm_solve(&lhs, &rhs)
        }
    };
    Ok(())
}

/// Minimum-norm Θ with Θ Z = Y for symmetric PSD Z.
fn min_norm_solve(z: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = z.clone().cholesky() {
        if crate::online::min_eigenvalue(z) > 1e-12 * (1.0 + z.amax()) {
            return chol.solve(&y.transpose()).transpose();
        }
    }
    let pinv = z.clone().pseudo_inverse(1e-12 * (1.0 + z.amax())).unwrap_or_else(|_| DMatrix::zeros(z.nrows(), z.ncols()));
    y * pinv
}

/// Which predictive model a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ExactSimulator,
    LearnedSimulator,
    LastCost,
    Zero,
    /// Random predictions of bounded norm, unrelated to the true gradient.
    BoundedRandom,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::ExactSimulator => "exact",
            ModelKind::LearnedSimulator => "learned",
            ModelKind::LastCost => "last_cost",
            ModelKind::Zero => "none",
            ModelKind::BoundedRandom => "adversarial",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => ModelKind::ExactSimulator,
            "learned" => ModelKind::LearnedSimulator,
            "last_cost" => ModelKind::LastCost,
            "none" => ModelKind::Zero,
            "adversarial" => ModelKind::BoundedRandom,
            other => return Err(MobilError::invalid(format!("unknown model oracle `{other}`"))),
        })
    }
}

/// First-order oracle for the benchmark: one of the predictive-model variants.
#[derive(Debug, Clone)]
pub struct PredictiveModel {
    pub kind: ModelKind,
    pub mode: SimulationMode,
    /// Recorded prediction noise level (zero for closed-form simulators).
    pub sigma_g_hat: f64,
    pub learner: Option<ModelLearnerState>,
    pub normalizer: Option<RunningNormalizer>,
    template: LinearDynamics,
    truth: LinearDynamics,
    k_star: DMatrix<f64>,
    sigma_a: DMatrix<f64>,
    cached_moment: Option<DMatrix<f64>>,
    radius: f64,
    rng: ChaCha8Rng,
}

impl PredictiveModel {
    pub fn new(kind: ModelKind, bench: &Benchmark, mode: SimulationMode, update: ModelUpdate, seed: u64) -> Self {
        let learner = (kind == ModelKind::LearnedSimulator)
            .then(|| ModelLearnerState::new(bench.dynamics.state_dim(), bench.dynamics.action_dim(), update));
        PredictiveModel {
            kind,
            mode,
            sigma_g_hat: 0.0,
            learner,
            normalizer: None,
            template: bench.dynamics.clone(),
            truth: bench.dynamics.clone(),
            k_star: bench.expert.k.clone(),
            sigma_a: bench.expert.sigma_a.clone(),
            cached_moment: None,
            radius: 1.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_normalizer(mut self, on: bool) -> Self {
        self.normalizer = on.then(|| RunningNormalizer::new(self.truth.state_dim()));
        self
    }

    /// Dynamics the simulator variants roll out under.
    pub fn dynamics(&self) -> Result<LinearDynamics> {
        match (&self.kind, &self.learner) {
            (ModelKind::LearnedSimulator, Some(l)) => self.template.with_theta(&l.estimate),
            _ => Ok(self.truth.clone()),
        }
    }

    /// Feeds round data: transition statistics for learning, the state moment for last_cost.
    pub fn observe(&mut self, n: usize, p: f64, stats: &TransitionStats, state_moment: &DMatrix<f64>) -> Result<()> {
        match self.kind {
            ModelKind::LearnedSimulator => {
                if let Some(l) = self.learner.as_mut() {
                    model_ftl_update(l, stats, n, p)?;
                }
            }
            ModelKind::LastCost => self.cached_moment = Some(state_moment.clone()),
            _ => {}
        }
        Ok(())
    }

    /// h̃_n(F̂_n) on the given round statistics, for models that carry dynamics.
    pub fn transition_loss(&self, stats: &TransitionStats) -> Option<f64> {
        match self.kind {
            ModelKind::ExactSimulator => Some(stats.loss(&self.truth.theta())),
            ModelKind::LearnedSimulator => self.learner.as_ref().map(|l| stats.loss(&l.estimate)),
            _ => None,
        }
    }
}

impl GradientOracle for PredictiveModel {
    fn predict(&mut self, pi: &Point) -> Result<Point> {
        let da = self.truth.action_dim();
        let ds = self.truth.state_dim();
        let k = crate::env::vec_to_gain(pi, da, ds)?;
        match self.kind {
            ModelKind::Zero => Ok(Point::zeros(pi.len())),
            ModelKind::BoundedRandom => {
                let v = gaussian_vector(pi.len(), &mut self.rng);
                let n = v.norm();
                let r = self.radius * rand::Rng::random::<f64>(&mut self.rng);
                Ok(if n > 0.0 { v * (r / n) } else { v })
            }
            ModelKind::LastCost => match &self.cached_moment {
                Some(m) => {
                    let loss = crate::env::ImitationLoss::new(m.clone(), self.k_star.clone(), &self.sigma_a)?;
                    Ok(gain_to_vec(&loss.grad(&k)))
                }
                None => Ok(Point::zeros(pi.len())),
            },
            ModelKind::ExactSimulator | ModelKind::LearnedSimulator => {
                let dyn_ = self.dynamics()?;
                let g = simulator_gradient_clipped(
                    &dyn_,
                    &k,
                    &self.k_star,
                    &self.sigma_a,
                    self.mode,
                    &mut self.rng,
                    self.normalizer.as_ref(),
                )?;
                Ok(gain_to_vec(&g))
            }
        }
    }
}

/// Per-round check of ‖g − ĝ‖² ≤ 4(σ_g² + σ_ĝ² + L²‖π − π̂‖² + C h̃).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionErrorTerms {
    pub pred_err_sq: f64,
    pub sigma_g_sq: f64,
    pub sigma_g_hat_sq: f64,
    pub lipschitz: f64,
    pub pi_gap: f64,
    pub model_loss: f64,
}

impl PredictionErrorTerms {
    pub fn bound(&self, model_constant: f64) -> f64 {
        4.0 * (self.sigma_g_sq
            + self.sigma_g_hat_sq
            + self.lipschitz * self.lipschitz * self.pi_gap * self.pi_gap
            + model_constant * self.model_loss)
    }

    pub fn holds(&self, model_constant: f64, tol: f64) -> bool {
        self.pred_err_sq <= self.bound(model_constant) + tol
    }
}
