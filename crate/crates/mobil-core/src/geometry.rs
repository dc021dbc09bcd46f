//! Feasible sets, Bregman divergences and the proximal step.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MobilError, Result};

pub type Point = DVector<f64>;

/// A closed convex decision set.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Box { lower: Point, upper: Point },
    Ball { center: Point, radius: f64 },
    Simplex { dim: usize },
    /// Cartesian product; coordinates are the concatenation of the blocks.
    Product(Vec<FeasibleSet>),
    Unconstrained { dim: usize },
}

impl FeasibleSet {
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        FeasibleSet::boxed(Point::from_element(dim, lo), Point::from_element(dim, hi))
    }

    pub fn boxed(lower: Point, upper: Point) -> Result<Self> {
        MobilError::check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(MobilError::invalid("box requires lower <= upper"));
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(MobilError::invalid("ball radius must be positive"));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Simplex { dim } | FeasibleSet::Unconstrained { dim } => *dim,
            FeasibleSet::Product(blocks) => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        match self {
            FeasibleSet::Unconstrained { .. } => true,
            FeasibleSet::Product(blocks) => blocks.iter().all(|b| b.is_unconstrained()),
            _ => false,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &Point) -> Result<Point> {
        MobilError::check_dim(self.dim(), x.len())?;
        Ok(match self {
            FeasibleSet::Box { lower, upper } => {
                Point::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lower[i], upper[i])))
            }
            FeasibleSet::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + d * (*radius / norm)
                }
            }
            FeasibleSet::Simplex { .. } => project_simplex(x),
            FeasibleSet::Product(blocks) => {
                let mut out = Point::zeros(x.len());
                let mut off = 0;
                for b in blocks {
                    let d = b.dim();
                    let part = b.project(&x.rows(off, d).into_owned())?;
                    out.rows_mut(off, d).copy_from(&part);
                    off += d;
                }
                out
            }
            FeasibleSet::Unconstrained { .. } => x.clone(),
        })
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Box { lower, upper } => {
                (0..x.len()).all(|i| x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)
            }
            FeasibleSet::Ball { center, radius } => (x - center).norm() <= radius + tol,
            FeasibleSet::Simplex { .. } => x.iter().all(|v| *v >= -tol) && (x.sum() - 1.0).abs() <= tol,
            FeasibleSet::Product(blocks) => {
                let mut off = 0;
                blocks.iter().all(|b| {
                    let d = b.dim();
                    let ok = b.contains(&x.rows(off, d).into_owned(), tol);
                    off += d;
                    ok
                })
            }
            FeasibleSet::Unconstrained { .. } => x.iter().all(|v| v.is_finite()),
        }
    }

    /// Draws a random feasible point. Unbounded sets are rejected.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        Ok(match self {
            FeasibleSet::Box { lower, upper } => Point::from_iterator(
                lower.len(),
                (0..lower.len()).map(|i| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>()),
            ),
            FeasibleSet::Ball { center, radius } => {
                let d = center.len();
                let dir = gaussian_vector(d, rng);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center + dir.normalize() * r
            }
            FeasibleSet::Simplex { dim } => {
                let e = Point::from_iterator(*dim, (0..*dim).map(|_| -rng.random::<f64>().max(1e-300).ln()));
                let s = e.sum();
                e / s
            }
            FeasibleSet::Product(blocks) => {
                let parts = blocks.iter().map(|b| b.sample(rng)).collect::<Result<Vec<_>>>()?;
                concat(&parts)
            }
            FeasibleSet::Unconstrained { .. } => {
                return Err(MobilError::invalid("cannot sample from an unbounded set"))
            }
        })
    }

    /// Block sizes when the set is a simplex or a product of simplices.
    pub fn simplex_blocks(&self) -> Option<Vec<usize>> {
        match self {
            FeasibleSet::Simplex { dim } => Some(vec![*dim]),
            FeasibleSet::Product(blocks) => {
                let mut dims = Vec::new();
                for b in blocks {
                    dims.extend(b.simplex_blocks()?);
                }
                Some(dims)
            }
            _ => None,
        }
    }
}

pub(crate) fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Point {
    Point::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

pub(crate) fn concat(parts: &[Point]) -> Point {
    let n = parts.iter().map(|p| p.len()).sum();
    Point::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

fn project_simplex(x: &Point) -> Point {
    let mut u: Vec<f64> = x.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, v) in u.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (j as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}

/// Distance-generating function ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BregmanGenerator {
    /// ω(x) = ½‖x‖², paired with the L2 norm.
    #[default]
    SquaredL2,
    /// ω(x) = Σ x_i ln x_i on simplices, paired with L1 / L∞.
    NegEntropy,
}

impl BregmanGenerator {
    /// Strong-convexity modulus with respect to the paired norm.
    pub fn alpha(&self) -> f64 {
        1.0
    }

    pub fn norm(&self, x: &Point) -> f64 {
        match self {
            BregmanGenerator::SquaredL2 => x.norm(),
            BregmanGenerator::NegEntropy => x.lp_norm(1),
        }
    }

    pub fn dual_norm(&self, v: &Point) -> f64 {
        match self {
            BregmanGenerator::SquaredL2 => v.norm(),
            BregmanGenerator::NegEntropy => v.amax(),
        }
    }

    pub fn omega(&self, x: &Point) -> Result<f64> {
        match self {
            BregmanGenerator::SquaredL2 => Ok(0.5 * x.norm_squared()),
            BregmanGenerator::NegEntropy => {
                if x.iter().any(|v| *v < 0.0) {
                    return Err(MobilError::invalid("entropy needs nonnegative coordinates"));
                }
                Ok(x.iter().map(|v| if *v > 0.0 { v * v.ln() } else { 0.0 }).sum())
            }
        }
    }

    pub fn grad(&self, x: &Point) -> Result<Point> {
        match self {
            BregmanGenerator::SquaredL2 => Ok(x.clone()),
            BregmanGenerator::NegEntropy => {
                if x.iter().any(|v| !(*v > 0.0)) {
                    return Err(MobilError::invalid("entropy gradient needs positive coordinates"));
                }
                Ok(x.map(|v| v.ln() + 1.0))
            }
        }
    }

    /// Ω² = max over the set of B_ω(x‖y); infinite when unbounded.
    pub fn omega_sq(&self, set: &FeasibleSet) -> f64 {
        match self {
            BregmanGenerator::SquaredL2 => match set {
                FeasibleSet::Box { lower, upper } => 0.5 * (upper - lower).norm_squared(),
                FeasibleSet::Ball { radius, .. } => 2.0 * radius * radius,
                FeasibleSet::Simplex { dim } => {
                    if *dim > 1 {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeasibleSet::Product(blocks) => blocks.iter().map(|b| self.omega_sq(b)).sum(),
                FeasibleSet::Unconstrained { .. } => f64::INFINITY,
            },
            BregmanGenerator::NegEntropy => f64::INFINITY,
        }
    }
}

/// B_ω(x‖y) = ω(x) − ω(y) − ⟨∇ω(y), x − y⟩.
pub fn bregman(gen: BregmanGenerator, x: &Point, y: &Point) -> Result<f64> {
    MobilError::check_dim(x.len(), y.len())?;
    match gen {
        BregmanGenerator::SquaredL2 => Ok(0.5 * (x - y).norm_squared()),
        BregmanGenerator::NegEntropy => {
            if y.iter().any(|v| !(*v > 0.0)) {
                return Err(MobilError::invalid("entropy divergence needs y > 0"));
            }
            if x.iter().any(|v| *v < 0.0) {
                return Err(MobilError::invalid("entropy divergence needs x >= 0"));
            }
            Ok(x.iter()
                .zip(y.iter())
                .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() - a + b } else { *b })
                .sum())
        }
    }
}

/// argmin over the set of ⟨v, x⟩ + B_ω(x‖y).
pub fn prox_step(gen: BregmanGenerator, set: &FeasibleSet, y: &Point, v: &Point) -> Result<Point> {
    MobilError::check_dim(set.dim(), y.len())?;
    MobilError::check_dim(set.dim(), v.len())?;
    if !set.contains(y, 1e-9) {
        return Err(MobilError::invalid("prox center is infeasible"));
    }
    match gen {
        BregmanGenerator::SquaredL2 => set.project(&(y - v)),
        BregmanGenerator::NegEntropy => {
            let blocks = set
                .simplex_blocks()
                .ok_or_else(|| MobilError::invalid("entropy prox requires simplex blocks"))?;
            if y.iter().any(|c| !(*c > 0.0)) {
                return Err(MobilError::invalid("entropy prox needs y in the relative interior"));
            }
            let mut out = Point::zeros(y.len());
            let mut off = 0;
            for d in blocks {
                let logits: Vec<f64> = (off..off + d).map(|i| y[i].ln() - v[i]).collect();
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for (j, l) in logits.iter().enumerate() {
                    out[off + j] = (l - m).exp() / z;
                }
                off += d;
            }
            Ok(out)
        }
    }
}
