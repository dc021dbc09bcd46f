//! Monotone variational inequalities and stochastic Mirror-Prox.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::operator_norm;
use crate::error::{MobilError, Result};
use crate::geometry::{prox_step, BregmanGenerator, FeasibleSet, Point};
use crate::mobil::{mobil_prox_round, ProxState};
use crate::online::min_eigenvalue;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// F(x) = M x + b.
    Affine { m: DMatrix<f64>, b: Point },
    /// F(x, y) = (A y, −Aᵀ x) for min over x, max over y of xᵀ A y on two simplices.
    SaddleBilinear { payoff: DMatrix<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneOperator {
    pub kind: OperatorKind,
    pub set: FeasibleSet,
    pub lipschitz: f64,
    pub strong_monotonicity: f64,
}

impl MonotoneOperator {
    pub fn affine(m: DMatrix<f64>, b: Point, set: FeasibleSet) -> Result<Self> {
        if !m.is_square() || m.nrows() != b.len() || set.dim() != b.len() {
            return Err(MobilError::invalid("affine operator dimensions disagree"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let mu = min_eigenvalue(&sym);
        if mu < -1e-10 * (1.0 + m.amax()) {
            return Err(MobilError::invalid("operator is not monotone"));
        }
        let lipschitz = operator_norm(&m);
        Ok(MonotoneOperator { kind: OperatorKind::Affine { m, b }, set, lipschitz, strong_monotonicity: mu.max(0.0) })
    }

    pub fn bilinear(payoff: DMatrix<f64>) -> Result<Self> {
        if payoff.nrows() == 0 || payoff.ncols() == 0 {
            return Err(MobilError::invalid("empty payoff matrix"));
        }
        let set = FeasibleSet::Product(vec![
            FeasibleSet::Simplex { dim: payoff.nrows() },
            FeasibleSet::Simplex { dim: payoff.ncols() },
        ]);
        let lipschitz = operator_norm(&payoff);
        Ok(MonotoneOperator { kind: OperatorKind::SaddleBilinear { payoff }, set, lipschitz, strong_monotonicity: 0.0 })
    }

    pub fn rock_paper_scissors() -> Self {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
        MonotoneOperator::bilinear(a).expect("valid payoff")
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn eval(&self, x: &Point) -> Result<Point> {
        MobilError::check_dim(self.dim(), x.len())?;
        Ok(match &self.kind {
            OperatorKind::Affine { m, b } => m * x + b,
            OperatorKind::SaddleBilinear { payoff } => {
                let (r, c) = payoff.shape();
                let u = x.rows(0, r).into_owned();
                let v = x.rows(r, c).into_owned();
                let top = payoff * v;
                let bottom = -(payoff.transpose() * u);
                crate::geometry::concat(&[top, bottom])
            }
        })
    }

    /// The matrix M with F(x) = M x + b.
    pub fn linear_part(&self) -> DMatrix<f64> {
        match &self.kind {
            OperatorKind::Affine { m, .. } => m.clone(),
            OperatorKind::SaddleBilinear { payoff } => {
                let (r, c) = payoff.shape();
                let mut m = DMatrix::zeros(r + c, r + c);
                m.view_mut((0, r), (r, c)).copy_from(payoff);
                m.view_mut((r, 0), (c, r)).copy_from(&(-payoff.transpose()));
                m
            }
        }
    }

    fn is_skew(&self) -> bool {
        let m = self.linear_part();
        (&m + m.transpose()).amax() <= 1e-12 * (1.0 + m.amax())
    }
}

/// Step sizes γ_n.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// γ_n = (α/L) w_n / max_m w_m with w_n = n^p over the run length.
    Weighted { p: f64 },
    Explicit(Vec<f64>),
}

impl StepSchedule {
    pub fn gammas(&self, n: usize, alpha: f64, lipschitz: f64) -> Result<Vec<f64>> {
        let g: Vec<f64> = match self {
            StepSchedule::Constant(g) => vec![*g; n],
            StepSchedule::Weighted { p } => {
                let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(*p)).collect();
                let wmax = w.iter().copied().fold(0.0, f64::max);
                w.iter().map(|wi| alpha / lipschitz * wi / wmax).collect()
            }
            StepSchedule::Explicit(v) => {
                if v.len() < n {
                    return Err(MobilError::invalid("explicit step list is shorter than the run"));
                }
                v[..n].to_vec()
            }
        };
        if g.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(MobilError::invalid("step sizes must be positive"));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorProxConfig {
    pub steps: StepSchedule,
    pub generator: BregmanGenerator,
    /// Std of the (truncated Gaussian) noise added to each operator call, in dual norm.
    pub noise_sigma: f64,
    /// Start from x_1 = Prox_{x̂_1}(γ_1 F(x̂_1)) instead of x_1 = x̂_1.
    pub extrapolate_first: bool,
}

impl Default for MirrorProxConfig {
    fn default() -> Self {
        MirrorProxConfig {
            steps: StepSchedule::Constant(0.1),
            generator: BregmanGenerator::SquaredL2,
            noise_sigma: 0.0,
            extrapolate_first: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorProxTrace {
    pub x: Vec<Point>,
    pub x_hat: Vec<Point>,
    pub gamma: Vec<f64>,
    pub g: Vec<Point>,
    pub g_hat: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorProxRun {
    pub x_bar: Point,
    pub trace: MirrorProxTrace,
}

impl MirrorProxRun {
    /// Running averages x̄_1, …, x̄_N.
    pub fn running_averages(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.trace.x.len());
        let mut acc = Point::zeros(self.x_bar.len());
        let mut total = 0.0;
        for (x, g) in self.trace.x.iter().zip(&self.trace.gamma) {
            acc += x * *g;
            total += g;
            out.push(&acc / total);
        }
        out
    }
}

/// Per-coordinate Gaussian noise truncated at three standard deviations, scaled so
/// that E‖ξ‖² ≤ σ².
fn truncated_noise<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> Point {
    let s = sigma / (d as f64).sqrt();
    Point::from_iterator(
        d,
        (0..d).map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 3.0 {
                break z * s;
            }
        }),
    )
}

/// x̂_{n+1} = Prox_{x̂_n}(γ_n g_n), x_{n+1} = Prox_{x̂_{n+1}}(γ_{n+1} ĝ_{n+1}).
pub fn mirror_prox_run<R: Rng + ?Sized>(
    op: &MonotoneOperator,
    cfg: &MirrorProxConfig,
    x1: &Point,
    n: usize,
    rng: &mut R,
) -> Result<MirrorProxRun> {
    if n == 0 {
        return Err(MobilError::invalid("run length must be positive"));
    }
    if !op.set.contains(x1, 1e-9) {
        return Err(MobilError::invalid("initial point is infeasible"));
    }
    let gen = cfg.generator;
    let gamma = cfg.steps.gammas(n, gen.alpha(), op.lipschitz.max(f64::MIN_POSITIVE))?;
    let noisy = |x: &Point, rng: &mut R| -> Result<Point> {
        let mut v = op.eval(x)?;
        if cfg.noise_sigma > 0.0 {
            v += truncated_noise(x.len(), cfg.noise_sigma, rng);
        }
        Ok(v)
    };
    let mut x_hat = x1.clone();
    let mut g_hat0 = Point::zeros(x1.len());
    let mut x = if cfg.extrapolate_first {
        g_hat0 = noisy(&x_hat, rng)?;
        prox_step(gen, &op.set, &x_hat, &(&g_hat0 * gamma[0]))?
    } else {
        x1.clone()
    };
    let mut trace = MirrorProxTrace {
        x: Vec::with_capacity(n),
        x_hat: Vec::with_capacity(n),
        gamma: gamma.clone(),
        g: Vec::with_capacity(n),
        g_hat: Vec::with_capacity(n),
    };
    trace.g_hat.push(g_hat0);
    for i in 0..n {
        let g = noisy(&x, rng)?;
        trace.x.push(x.clone());
        trace.x_hat.push(x_hat.clone());
        trace.g.push(g.clone());
        if i + 1 == n {
            break;
        }
        x_hat = prox_step(gen, &op.set, &x_hat, &(&g * gamma[i]))?;
        let gh = noisy(&x_hat, rng)?;
        x = prox_step(gen, &op.set, &x_hat, &(&gh * gamma[i + 1]))?;
        trace.g_hat.push(gh);
    }
    let total: f64 = gamma.iter().sum();
    let x_bar = trace.x.iter().zip(&gamma).fold(Point::zeros(x1.len()), |acc, (xi, gi)| acc + xi * *gi) / total;
    Ok(MirrorProxRun { x_bar, trace })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrGap {
    pub value: f64,
    /// False when the value is a sampled lower bound.
    pub exact: bool,
}

/// Number of sampled points used when ERR has no exact solver.
pub const ERR_SAMPLES: usize = 10_000;

/// ERR(x) = max over the set of ⟨F(y), x − y⟩.
pub fn err_gap(op: &MonotoneOperator, x: &Point) -> Result<ErrGap> {
    MobilError::check_dim(op.dim(), x.len())?;
    if !op.set.contains(x, 1e-9) {
        return Err(MobilError::invalid("ERR is defined for feasible points only"));
    }
    let m = op.linear_part();
    let b = match &op.kind {
        OperatorKind::Affine { b, .. } => b.clone(),
        OperatorKind::SaddleBilinear { .. } => Point::zeros(x.len()),
    };
    // With skew M, ⟨My + b, x − y⟩ = yᵀ(Mᵀx − b) + bᵀx is linear in y.
    if op.is_skew() {
        if let Some(blocks) = op.set.simplex_blocks() {
            let c = m.transpose() * x - &b;
            let mut value = b.dot(x);
            let mut off = 0;
            for d in blocks {
                value += c.rows(off, d).max();
                off += d;
            }
            return Ok(ErrGap { value, exact: true });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best = 0.0_f64;
    for _ in 0..ERR_SAMPLES {
        let y = op.set.sample(&mut rng)?;
        best = best.max(op.eval(&y)?.dot(&(x - &y)));
    }
    Ok(ErrGap { value: best, exact: false })
}

/// √2 Ω² L / (α N).
pub fn deterministic_bound(omega_sq: f64, lipschitz: f64, alpha: f64, n: usize) -> f64 {
    2f64.sqrt() * omega_sq * lipschitz / (alpha * n as f64)
}

/// max{7Ω²L/(2αN), Ω √(14σ²/N)}.
pub fn stochastic_bound(omega_sq: f64, lipschitz: f64, alpha: f64, sigma: f64, n: usize) -> f64 {
    let n = n as f64;
    (3.5 * omega_sq * lipschitz / (alpha * n)).max(omega_sq.sqrt() * (14.0 * sigma * sigma / n).sqrt())
}

/// Step size achieving the stochastic bound: min{α/(√3 L), αΩ√(2/(7Nσ²))}.
pub fn stochastic_step(omega_sq: f64, lipschitz: f64, alpha: f64, sigma: f64, n: usize) -> f64 {
    let a = alpha / (3f64.sqrt() * lipschitz);
    if sigma > 0.0 {
        a.min(alpha * omega_sq.sqrt() * (2.0 / (7.0 * n as f64 * sigma * sigma)).sqrt())
    } else {
        a
    }
}

/// Ω²L/α · max w / w_{1:N}.
pub fn weighted_bound(omega_sq: f64, lipschitz: f64, alpha: f64, weights: &[f64]) -> f64 {
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    omega_sq * lipschitz / alpha * wmax / weights.iter().sum::<f64>()
}

/// Runs MoBIL-Prox (w_n = γ_n, r_1 = B(·‖π_1), r_n = 0 afterwards, exact model)
/// and Mirror-Prox side by side; returns the largest iterate deviation.
pub fn equivalence_check(op: &MonotoneOperator, x1: &Point, steps: &StepSchedule, n: usize) -> Result<f64> {
    if !op.set.is_unconstrained() {
        return Err(MobilError::invalid("equivalence holds only on unconstrained sets"));
    }
    let cfg = MirrorProxConfig {
        steps: steps.clone(),
        generator: BregmanGenerator::SquaredL2,
        noise_sigma: 0.0,
        extrapolate_first: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mp = mirror_prox_run(op, &cfg, x1, n, &mut rng)?;
    let gamma = &mp.trace.gamma;
    let mut state = ProxState::new(x1.clone());
    let mut oracle = |p: &Point| op.eval(p);
    let mut dev = 0.0_f64;
    for i in 0..n {
        dev = dev.max((&mp.trace.x[i] - &state.pi).norm()).max((&mp.trace.x_hat[i] - &state.pi_hat).norm());
        if i + 1 == n {
            break;
        }
        let g = op.eval(&state.pi)?;
        let reg = if i == 0 { 1.0 } else { 0.0 };
        mobil_prox_round(&mut state, &g, gamma[i], reg, gamma[i + 1], &mut oracle, &op.set)?;
    }
    Ok(dev)
}
