//! Quadratic online losses, FTL / FTRL learners, the weighted regret ledger
//! and audits of the follow-the-leader lemmas.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{MobilError, Result};
use crate::geometry::{FeasibleSet, Point};

/// f(x) = ½ xᵀHx + bᵀx + c₀ with H symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    pub h: DMatrix<f64>,
    pub b: Point,
    pub c0: f64,
}

const PSD_TOL: f64 = 1e-10;

impl QuadraticLoss {
    pub fn new(h: DMatrix<f64>, b: Point, c0: f64) -> Result<Self> {
        if !h.is_square() {
            return Err(MobilError::invalid("curvature must be square"));
        }
        MobilError::check_dim(h.nrows(), b.len())?;
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-9 * (1.0 + h.amax()) {
            return Err(MobilError::invalid("curvature must be symmetric"));
        }
        let h = (&h + h.transpose()) * 0.5;
        if min_eigenvalue(&h) < -PSD_TOL * (1.0 + h.amax()) {
            return Err(MobilError::invalid("curvature must be positive semidefinite"));
        }
        Ok(QuadraticLoss { h, b, c0 })
    }

    pub fn zero(dim: usize) -> Self {
        QuadraticLoss { h: DMatrix::zeros(dim, dim), b: Point::zeros(dim), c0: 0.0 }
    }

    /// ½ (x − center)ᵀ H (x − center) + offset.
    pub fn centered(h: DMatrix<f64>, center: &Point, offset: f64) -> Result<Self> {
        let hc = &h * center;
        let c0 = 0.5 * center.dot(&hc) + offset;
        QuadraticLoss::new(h, -hc, c0)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &Point) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.b.dot(x) + self.c0
    }

    pub fn grad(&self, x: &Point) -> Point {
        &self.h * x + &self.b
    }

    /// Smallest eigenvalue of H (the strong-convexity modulus in L2).
    pub fn modulus(&self) -> f64 {
        min_eigenvalue(&self.h)
    }

    pub fn scaled(&self, w: f64) -> Self {
        QuadraticLoss { h: &self.h * w, b: &self.b * w, c0: self.c0 * w }
    }

    pub fn add_scaled(&mut self, other: &QuadraticLoss, w: f64) {
        self.h += &other.h * w;
        self.b += &other.b * w;
        self.c0 += other.c0 * w;
    }

    pub fn add_linear(&mut self, g: &Point, w: f64) {
        self.b += g * w;
    }
}

pub(crate) fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(h.clone()).eigenvalues.min()
}

pub(crate) fn max_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(h.clone()).eigenvalues.max()
}

fn is_diagonal(h: &DMatrix<f64>) -> bool {
    (0..h.nrows()).all(|i| (0..h.ncols()).all(|j| i == j || h[(i, j)] == 0.0))
}

/// Exact minimizer of a quadratic over a feasible set.
///
/// Uses a linear solve when the unconstrained minimizer is feasible, a
/// coordinatewise solve for diagonal curvature on boxes, and accelerated
/// projected gradient otherwise.
pub fn minimize_quadratic(q: &QuadraticLoss, set: &FeasibleSet) -> Result<Point> {
    let d = q.dim();
    MobilError::check_dim(set.dim(), d)?;
    let mu = q.modulus();
    let scale = 1.0 + q.h.amax();
    let pd = mu > 1e-12 * scale;
    if pd {
        if let Some(chol) = q.h.clone().cholesky() {
            let x = chol.solve(&(-&q.b));
            if set.contains(&x, 0.0) {
                return Ok(x);
            }
        }
    }
    if set.is_unconstrained() {
        return Err(MobilError::Singular("curvature is not positive definite on an unbounded set".into()));
    }
    if let FeasibleSet::Box { lower, upper } = set {
        if is_diagonal(&q.h) {
            return Ok(Point::from_iterator(
                d,
                (0..d).map(|i| {
                    let hi = q.h[(i, i)];
                    if hi > 0.0 {
                        (-q.b[i] / hi).clamp(lower[i], upper[i])
                    } else if q.b[i] > 0.0 {
                        lower[i]
                    } else {
                        upper[i]
                    }
                }),
            ));
        }
    }
    projected_gradient(q, set, mu.max(0.0))
}

fn projected_gradient(q: &QuadraticLoss, set: &FeasibleSet, mu: f64) -> Result<Point> {
    let lmax = max_eigenvalue(&q.h);
    if lmax <= 0.0 {
        return linear_minimizer(&q.b, set);
    }
    let step = 1.0 / lmax;
    let momentum = if mu > 0.0 {
        let r = (mu / lmax).sqrt();
        Some((1.0 - r) / (1.0 + r))
    } else {
        None
    };
    let mut x = set.project(&Point::zeros(q.dim()))?;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let max_iter = 500_000;
    for it in 0..max_iter {
        let x_next = set.project(&(&y - q.grad(&y) * step))?;
        let change = (&x_next - &x).norm();
        if change <= 1e-13 * (1.0 + x_next.norm()) && it > 2 {
            return Ok(x_next);
        }
        let beta = match momentum {
            Some(m) => m,
            None => {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let b = (t - 1.0) / t_next;
                t = t_next;
                b
            }
        };
        // Gradient restart test; comparing objective values fails below rounding.
        if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
            y = x.clone();
            t = 1.0;
            continue;
        }
        y = &x_next + (&x_next - &x) * beta;
        x = x_next;
    }
    Err(MobilError::NotConverged { iterations: max_iter, residual: f64::NAN })
}

/// argmin over a bounded set of ⟨b, x⟩.
fn linear_minimizer(b: &Point, set: &FeasibleSet) -> Result<Point> {
    Ok(match set {
        FeasibleSet::Box { lower, upper } => {
            Point::from_iterator(b.len(), (0..b.len()).map(|i| if b[i] > 0.0 { lower[i] } else { upper[i] }))
        }
        FeasibleSet::Ball { center, radius } => {
            let n = b.norm();
            if n > 0.0 {
                center - b * (*radius / n)
            } else {
                center.clone()
            }
        }
        FeasibleSet::Simplex { dim } => {
            let mut x = Point::zeros(*dim);
            x[b.imin()] = 1.0;
            x
        }
        FeasibleSet::Product(blocks) => {
            let mut parts = Vec::with_capacity(blocks.len());
            let mut off = 0;
            for blk in blocks {
                let d = blk.dim();
                parts.push(linear_minimizer(&b.rows(off, d).into_owned(), blk)?);
                off += d;
            }
            crate::geometry::concat(&parts)
        }
        FeasibleSet::Unconstrained { .. } => {
            return Err(MobilError::Singular("linear objective on an unbounded set".into()))
        }
    })
}

/// FTL: argmin of the accumulated weighted losses.
pub fn ftl_update(accumulated: &QuadraticLoss, set: &FeasibleSet) -> Result<Point> {
    minimize_quadratic(accumulated, set)
}

/// Σ_m (a_m/2)‖x − x_m‖², stored as its total coefficient and the weighted anchor sum.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredRegularizer {
    pub total: f64,
    pub anchor_sum: Point,
}

impl AnchoredRegularizer {
    pub fn new(dim: usize) -> Self {
        AnchoredRegularizer { total: 0.0, anchor_sum: Point::zeros(dim) }
    }

    pub fn add(&mut self, coeff: f64, anchor: &Point) -> Result<()> {
        if !(coeff >= 0.0) {
            return Err(MobilError::invalid("regularizer coefficients must be nonnegative"));
        }
        self.total += coeff;
        self.anchor_sum += anchor * coeff;
        Ok(())
    }

    /// argmin over the set of ⟨lin, x⟩ + Σ (a_m/2)‖x − x_m‖².
    pub fn argmin(&self, lin: &Point, set: &FeasibleSet) -> Result<Point> {
        if !(self.total > 0.0) {
            return Err(MobilError::Singular("accumulated regularizer has zero curvature".into()));
        }
        set.project(&((&self.anchor_sum - lin) / self.total))
    }
}

/// FTRL on linearized losses: argmin of Σ w_m⟨g_m, x⟩ + Σ w_m r_m(x).
pub fn ftrl_update(gradient_sum: &Point, regularizers: &AnchoredRegularizer, set: &FeasibleSet) -> Result<Point> {
    regularizers.argmin(gradient_sum, set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub n: usize,
    pub w: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Per-round weighted losses and the exact best-in-hindsight value.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    pub records: Vec<RoundRecord>,
    accumulated: QuadraticLoss,
    weighted_loss: f64,
    weight_sum: f64,
}

impl RegretLedger {
    pub fn new(dim: usize) -> Self {
        RegretLedger { records: Vec::new(), accumulated: QuadraticLoss::zero(dim), weighted_loss: 0.0, weight_sum: 0.0 }
    }

    pub fn record(&mut self, w: f64, loss: &QuadraticLoss, played: &Point) {
        let value = loss.value(played);
        self.records.push(RoundRecord {
            n: self.records.len() + 1,
            w,
            loss: value,
            grad_norm: loss.grad(played).norm(),
        });
        self.accumulated.add_scaled(loss, w);
        self.weighted_loss += w * value;
        self.weight_sum += w;
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn best_in_hindsight(&self, set: &FeasibleSet) -> Result<f64> {
        let x = minimize_quadratic(&self.accumulated, set)?;
        Ok(self.accumulated.value(&x))
    }

    /// regret^w = Σ w_n f_n(x_n) − min_x Σ w_n f_n(x).
    pub fn weighted_regret(&self, set: &FeasibleSet) -> Result<f64> {
        if self.records.is_empty() {
            return Err(MobilError::invalid("ledger has no rounds"));
        }
        Ok(self.weighted_loss - self.best_in_hindsight(set)?)
    }

    /// R(p) = regret^w / w_{1:N}.
    pub fn average_regret(&self, set: &FeasibleSet) -> Result<f64> {
        Ok(self.weighted_regret(set)? / self.weight_sum)
    }

    /// Realized-sequence estimate of the policy-class gap, min_x Σ θ_n f_n(x).
    /// It is a lower bound on the worst case over sequences.
    pub fn policy_class_gap(&self, set: &FeasibleSet) -> Result<f64> {
        Ok(self.best_in_hindsight(set)? / self.weight_sum)
    }
}

/// regret^w for explicit losses, weights and decisions.
pub fn weighted_regret(losses: &[QuadraticLoss], weights: &[f64], decisions: &[Point], set: &FeasibleSet) -> Result<f64> {
    if losses.len() != weights.len() || losses.len() != decisions.len() {
        return Err(MobilError::invalid("losses, weights and decisions must align"));
    }
    let dim = set.dim();
    let mut ledger = RegretLedger::new(dim);
    for ((l, w), x) in losses.iter().zip(weights).zip(decisions) {
        ledger.record(*w, l, x);
    }
    ledger.weighted_regret(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtlAudit {
    pub regret: f64,
    pub strong_bound: f64,
    pub stronger_residual: f64,
    /// Δ_n for n = 1..N, with Δ_1 = 0.
    pub delta_values: Vec<f64>,
}

/// Evaluates both sides of the strong and stronger FTL statements.
pub fn ftl_lemma_audit(losses: &[QuadraticLoss], decisions: &[Point], set: &FeasibleSet) -> Result<FtlAudit> {
    if losses.len() != decisions.len() || losses.is_empty() {
        return Err(MobilError::invalid("losses and decisions must align and be nonempty"));
    }
    let dim = set.dim();
    let mut prefix = QuadraticLoss::zero(dim);
    let mut prev_star: Option<Point> = None;
    let mut played = 0.0;
    let mut strong_bound = 0.0;
    let mut deltas = Vec::with_capacity(losses.len());
    let mut last_star_value = 0.0;
    for (l, x) in losses.iter().zip(decisions) {
        // Δ_n compares x_n with the previous leader on l_{1:n−1}.
        let delta = match &prev_star {
            Some(star) => prefix.value(x) - prefix.value(star),
            None => 0.0,
        };
        deltas.push(delta);
        prefix.add_scaled(l, 1.0);
        let star = minimize_quadratic(&prefix, set)?;
        played += l.value(x);
        strong_bound += prefix.value(x) - prefix.value(&star);
        last_star_value = prefix.value(&star);
        prev_star = Some(star);
    }
    let regret = played - last_star_value;
    let identity: f64 = strong_bound - deltas.iter().sum::<f64>();
    Ok(FtlAudit { regret, strong_bound, stronger_residual: (regret - identity).abs(), delta_values: deltas })
}

/// Plays FTL on the given losses, starting from `x1`.
pub fn play_ftl(losses: &[QuadraticLoss], x1: &Point, set: &FeasibleSet) -> Result<Vec<Point>> {
    let mut out = Vec::with_capacity(losses.len());
    let mut prefix = QuadraticLoss::zero(set.dim());
    out.push(x1.clone());
    for l in &losses[..losses.len().saturating_sub(1)] {
        prefix.add_scaled(l, 1.0);
        out.push(minimize_quadratic(&prefix, set)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimaShift {
    pub distance: f64,
    pub bound: f64,
}

/// Distance between argmin f and argmin (f + g), and the bound ‖∇g(argmin f)‖/μ.
pub fn optima_shift_audit(f: &QuadraticLoss, g: &QuadraticLoss, set: &FeasibleSet) -> Result<OptimaShift> {
    let mut sum = f.clone();
    sum.add_scaled(g, 1.0);
    let mu = sum.modulus();
    if !(mu > 0.0) {
        return Err(MobilError::Singular("f + g is not strongly convex".into()));
    }
    let x1 = minimize_quadratic(f, set)?;
    let x2 = minimize_quadratic(&sum, set)?;
    Ok(OptimaShift { distance: (&x1 - &x2).norm(), bound: g.grad(&x1).norm() / mu })
}

/// FTL average-regret bound for p = 0 on μ-strongly convex losses with gradients bounded by G.
pub fn ftl_rate_bound(g_bound: f64, mu: f64, n: usize) -> f64 {
    let n = n as f64;
    g_bound * g_bound / (2.0 * mu) * (n.ln() + 1.0) / n
}
