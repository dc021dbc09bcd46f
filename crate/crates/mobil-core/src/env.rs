//! Linear-Gaussian imitation-learning benchmark.
//!
//! States follow s' = A s + B a + w with a ~ N(K s, Σ_a). A learner gain K is
//! flattened row-major into a policy vector of length d_a·d_s.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MobilError, Result};
use crate::geometry::{gaussian_vector, FeasibleSet, Point};
use crate::online::{min_eigenvalue, QuadraticLoss};

/// Entries beyond this magnitude in a propagated moment count as blow-up.
pub const MOMENT_GUARD: f64 = 1e12;

/// Flattens a gain row-major.
pub fn gain_to_vec(k: &DMatrix<f64>) -> Point {
    Point::from_iterator(k.len(), (0..k.nrows()).flat_map(|i| (0..k.ncols()).map(move |j| k[(i, j)])))
}

pub fn vec_to_gain(v: &Point, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    MobilError::check_dim(rows * cols, v.len())?;
    Ok(DMatrix::from_row_iterator(rows, cols, v.iter().copied()))
}

/// Symmetric square root of a PSD matrix (negative eigenvalues are zeroed).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| MobilError::invalid("matrix is not positive definite"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub s0_mean: DVector<f64>,
    pub s0_cov: DMatrix<f64>,
    pub horizon: usize,
}

impl LinearDynamics {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        s0_mean: DVector<f64>,
        s0_cov: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let ds = a.nrows();
        if !a.is_square() || b.nrows() != ds || sigma_w.shape() != (ds, ds) || s0_mean.len() != ds || s0_cov.shape() != (ds, ds) {
            return Err(MobilError::invalid("inconsistent dynamics dimensions"));
        }
        if horizon == 0 {
            return Err(MobilError::invalid("horizon must be positive"));
        }
        for (name, m) in [("process noise", &sigma_w), ("initial covariance", &s0_cov)] {
            if (m - m.transpose()).amax() > 1e-12 || min_eigenvalue(m) < -1e-12 {
                return Err(MobilError::invalid(format!("{name} must be symmetric PSD")));
            }
        }
        Ok(LinearDynamics { a, b, sigma_w, s0_mean, s0_cov, horizon })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Θ = [A B].
    pub fn theta(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.state_dim(), self.state_dim() + self.action_dim());
        t.columns_mut(0, self.state_dim()).copy_from(&self.a);
        t.columns_mut(self.state_dim(), self.action_dim()).copy_from(&self.b);
        t
    }

    pub fn with_theta(&self, theta: &DMatrix<f64>) -> Result<Self> {
        let ds = self.state_dim();
        if theta.shape() != (ds, ds + self.action_dim()) {
            return Err(MobilError::invalid("model parameters have the wrong shape"));
        }
        let mut out = self.clone();
        out.a = theta.columns(0, ds).into_owned();
        out.b = theta.columns(ds, self.action_dim()).into_owned();
        Ok(out)
    }

    /// Per-step state second moments E[s_t s_tᵀ] for t = 0..T−1.
    pub fn second_moments(&self, k: &DMatrix<f64>, sigma_a: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let cl = &self.a + &self.b * k;
        let drive = &self.b * sigma_a * self.b.transpose() + &self.sigma_w;
        let mut m = &self.s0_cov + &self.s0_mean * self.s0_mean.transpose();
        let mut out = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            if !m.iter().all(|v| v.is_finite() && v.abs() < MOMENT_GUARD) {
                return Err(MobilError::Unstable(format!("state moment exceeded the guard at t = {t}")));
            }
            out.push(m.clone());
            m = &cl * &m * cl.transpose() + &drive;
        }
        Ok(out)
    }

    /// State second moment averaged uniformly over the horizon.
    pub fn averaged_second_moment(&self, k: &DMatrix<f64>, sigma_a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ms = self.second_moments(k, sigma_a)?;
        let n = ms.len() as f64;
        Ok(ms.into_iter().fold(DMatrix::zeros(self.state_dim(), self.state_dim()), |acc, m| acc + m) / n)
    }

    /// Exact transition statistics of the horizon-averaged (s, a, s') distribution.
    pub fn transition_moments(&self, k: &DMatrix<f64>, sigma_a: &DMatrix<f64>) -> Result<TransitionStats> {
        let ds = self.state_dim();
        let da = self.action_dim();
        let ms = self.averaged_second_moment(k, sigma_a)?;
        let mut zz = DMatrix::zeros(ds + da, ds + da);
        let mk = &ms * k.transpose();
        zz.view_mut((0, 0), (ds, ds)).copy_from(&ms);
        zz.view_mut((0, ds), (ds, da)).copy_from(&mk);
        zz.view_mut((ds, 0), (da, ds)).copy_from(&mk.transpose());
        zz.view_mut((ds, ds), (da, da)).copy_from(&(k * &mk + sigma_a));
        let theta = self.theta();
        let yz = &theta * &zz;
        let yy_trace = (&theta * &zz * theta.transpose()).trace() + self.sigma_w.trace();
        Ok(TransitionStats { zz, yz, yy_trace, count: self.horizon })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianPolicy {
    pub k: DMatrix<f64>,
    pub sigma_a: DMatrix<f64>,
}

impl LinearGaussianPolicy {
    pub fn new(k: DMatrix<f64>, sigma_a: DMatrix<f64>) -> Result<Self> {
        if sigma_a.shape() != (k.nrows(), k.nrows()) {
            return Err(MobilError::invalid("action covariance shape does not match the gain"));
        }
        if sigma_a.clone().cholesky().is_none() {
            return Err(MobilError::invalid("action covariance must be positive definite"));
        }
        Ok(LinearGaussianPolicy { k, sigma_a })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub t: usize,
    pub s: DVector<f64>,
    pub a: DVector<f64>,
    pub s_next: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub policy_id: u64,
    pub seed: u64,
    pub simulated: bool,
}

impl RolloutBatch {
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Empirical state second moment (1/|batch|) Σ s sᵀ.
    pub fn state_moment(&self) -> Result<DMatrix<f64>> {
        let first = self.transitions.first().ok_or_else(|| MobilError::invalid("empty rollout batch"))?;
        let d = first.s.len();
        let mut m = DMatrix::zeros(d, d);
        for tr in &self.transitions {
            m += &tr.s * tr.s.transpose();
        }
        Ok(m / self.transitions.len() as f64)
    }

    pub fn transition_stats(&self) -> Result<TransitionStats> {
        let first = self.transitions.first().ok_or_else(|| MobilError::invalid("empty rollout batch"))?;
        let ds = first.s.len();
        let dz = ds + first.a.len();
        let mut zz = DMatrix::zeros(dz, dz);
        let mut yz = DMatrix::zeros(ds, dz);
        let mut yy = 0.0;
        for tr in &self.transitions {
            let z = stack(&tr.s, &tr.a);
            zz += &z * z.transpose();
            yz += &tr.s_next * z.transpose();
            yy += tr.s_next.norm_squared();
        }
        let n = self.transitions.len() as f64;
        Ok(TransitionStats { zz: zz / n, yz: yz / n, yy_trace: yy / n, count: self.transitions.len() })
    }
}

fn stack(s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(s.len() + a.len(), s.iter().chain(a.iter()).copied())
}

/// Averaged sufficient statistics of transitions, z = (s, a), y = s'.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats {
    /// E[z zᵀ]
    pub zz: DMatrix<f64>,
    /// E[y zᵀ]
    pub yz: DMatrix<f64>,
    /// E[‖y‖²]
    pub yy_trace: f64,
    pub count: usize,
}

impl TransitionStats {
    /// h̃(Θ) = E‖y − Θ z‖².
    pub fn loss(&self, theta: &DMatrix<f64>) -> f64 {
        self.yy_trace - 2.0 * (theta * self.yz.transpose()).trace() + (theta * &self.zz * theta.transpose()).trace()
    }

    /// ∇h̃(Θ) = 2(Θ E[zzᵀ] − E[yzᵀ]).
    pub fn grad(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        (theta * &self.zz - &self.yz) * 2.0
    }

    /// Strong-convexity modulus μ_h = 2 λ_min(E[z zᵀ]).
    pub fn modulus(&self) -> f64 {
        2.0 * min_eigenvalue(&self.zz)
    }
}

/// Samples one trajectory of `horizon` transitions.
pub fn rollout<R: Rng + ?Sized>(dyn_: &LinearDynamics, pol: &LinearGaussianPolicy, rng: &mut R) -> RolloutBatch {
    rollouts(dyn_, pol, 1, rng)
}

/// Samples `count` independent trajectories.
pub fn rollouts<R: Rng + ?Sized>(dyn_: &LinearDynamics, pol: &LinearGaussianPolicy, count: usize, rng: &mut R) -> RolloutBatch {
    rollouts_clipped(dyn_, pol, count, rng, None)
}

pub(crate) fn rollouts_clipped<R: Rng + ?Sized>(
    dyn_: &LinearDynamics,
    pol: &LinearGaussianPolicy,
    count: usize,
    rng: &mut R,
    clip: Option<&RunningNormalizer>,
) -> RolloutBatch {
    let seed = rng.random::<u64>();
    let mut local = ChaCha8Rng::seed_from_u64(seed);
    let l0 = psd_sqrt(&dyn_.s0_cov);
    let lw = psd_sqrt(&dyn_.sigma_w);
    let la = psd_sqrt(&pol.sigma_a);
    let ds = dyn_.state_dim();
    let da = dyn_.action_dim();
    let mut transitions = Vec::with_capacity(count * dyn_.horizon);
    for _ in 0..count {
        let mut s = &dyn_.s0_mean + &l0 * gaussian_vector(ds, &mut local);
        for t in 0..dyn_.horizon {
            if let Some(norm) = clip {
                s = norm.clip(&s);
            }
            let a = &pol.k * &s + &la * gaussian_vector(da, &mut local);
            let s_next = &dyn_.a * &s + &dyn_.b * &a + &lw * gaussian_vector(ds, &mut local);
            transitions.push(Transition { t, s: s.clone(), a, s_next: s_next.clone() });
            s = s_next;
        }
    }
    RolloutBatch { transitions, policy_id: 0, seed, simulated: clip.is_some() }
}

/// KL imitation loss ½ tr(Σ_a⁻¹ (K − K*) S (K − K*)ᵀ) for a fixed state moment S.
#[derive(Debug, Clone, PartialEq)]
pub struct ImitationLoss {
    pub sigma_a_inv: DMatrix<f64>,
    pub state_moment: DMatrix<f64>,
    pub k_star: DMatrix<f64>,
}

impl ImitationLoss {
    pub fn new(state_moment: DMatrix<f64>, k_star: DMatrix<f64>, sigma_a: &DMatrix<f64>) -> Result<Self> {
        Ok(ImitationLoss { sigma_a_inv: spd_inverse(sigma_a)?, state_moment, k_star })
    }

    pub fn value(&self, k: &DMatrix<f64>) -> f64 {
        let d = k - &self.k_star;
        0.5 * (&self.sigma_a_inv * &d * &self.state_moment * d.transpose()).trace()
    }

    pub fn grad(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.sigma_a_inv * (k - &self.k_star) * &self.state_moment
    }

    /// μ_f = λ_min(Σ_a⁻¹) λ_min(S).
    pub fn modulus(&self) -> f64 {
        min_eigenvalue(&self.sigma_a_inv) * min_eigenvalue(&self.state_moment)
    }

    /// The same loss as a quadratic in the row-major policy vector.
    pub fn quadratic(&self) -> Result<QuadraticLoss> {
        let h = self.sigma_a_inv.kronecker(&self.state_moment);
        QuadraticLoss::centered(h, &gain_to_vec(&self.k_star), 0.0)
    }
}

/// f̃ value and gradient on a rollout batch.
pub fn il_loss_and_grad(
    batch: &RolloutBatch,
    k: &DMatrix<f64>,
    k_star: &DMatrix<f64>,
    sigma_a: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    if batch.is_empty() {
        return Err(MobilError::invalid("empty rollout batch"));
    }
    let loss = ImitationLoss::new(batch.state_moment()?, k_star.clone(), sigma_a)?;
    Ok((loss.value(k), loss.grad(k)))
}

/// How the simulator forms state moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    ClosedForm,
    MonteCarlo { rollouts: usize },
}

/// ĝ = Σ_a⁻¹ (K̂ − K*) Ê[s sᵀ] under the given dynamics estimate.
pub fn simulator_gradient<R: Rng + ?Sized>(
    dyn_est: &LinearDynamics,
    k_hat: &DMatrix<f64>,
    k_star: &DMatrix<f64>,
    sigma_a: &DMatrix<f64>,
    mode: SimulationMode,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    simulator_gradient_clipped(dyn_est, k_hat, k_star, sigma_a, mode, rng, None)
}

pub(crate) fn simulator_gradient_clipped<R: Rng + ?Sized>(
    dyn_est: &LinearDynamics,
    k_hat: &DMatrix<f64>,
    k_star: &DMatrix<f64>,
    sigma_a: &DMatrix<f64>,
    mode: SimulationMode,
    rng: &mut R,
    clip: Option<&RunningNormalizer>,
) -> Result<DMatrix<f64>> {
    let moment = match mode {
        SimulationMode::ClosedForm => dyn_est.averaged_second_moment(k_hat, sigma_a)?,
        SimulationMode::MonteCarlo { rollouts } => {
            if rollouts == 0 {
                return Err(MobilError::invalid("Monte-Carlo mode needs at least one rollout"));
            }
            let pol = LinearGaussianPolicy::new(k_hat.clone(), sigma_a.clone())?;
            let batch = rollouts_clipped(dyn_est, &pol, rollouts, rng, clip);
            let m = batch.state_moment()?;
            if !m.iter().all(|v| v.is_finite() && v.abs() < MOMENT_GUARD) {
                return Err(MobilError::Unstable("simulated states exceeded the guard".into()));
            }
            m
        }
    };
    Ok(ImitationLoss::new(moment, k_star.clone(), sigma_a)?.grad(k_hat))
}

/// h̃ value and gradients with respect to Â and B̂ on a batch.
pub fn model_transition_loss(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    batch: &RolloutBatch,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    if batch.is_empty() {
        return Err(MobilError::invalid("empty rollout batch"));
    }
    let n = batch.transitions.len() as f64;
    let mut value = 0.0;
    let mut ga = DMatrix::zeros(a_hat.nrows(), a_hat.ncols());
    let mut gb = DMatrix::zeros(b_hat.nrows(), b_hat.ncols());
    for tr in &batch.transitions {
        let r = &tr.s_next - a_hat * &tr.s - b_hat * &tr.a;
        value += r.norm_squared();
        ga -= &r * tr.s.transpose() * 2.0;
        gb -= &r * tr.a.transpose() * 2.0;
    }
    Ok((value / n, ga / n, gb / n))
}

/// Closed-form surrogate J(K) = E_{d_π}[KL] under the true dynamics.
pub fn j_closed_form(dyn_: &LinearDynamics, k: &DMatrix<f64>, k_star: &DMatrix<f64>, sigma_a: &DMatrix<f64>) -> Result<f64> {
    let m = dyn_.averaged_second_moment(k, sigma_a)?;
    Ok(ImitationLoss::new(m, k_star.clone(), sigma_a)?.value(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of E_{d_π}[KL(π_s ‖ π*_s)].
pub fn evaluate_j<R: Rng + ?Sized>(
    dyn_: &LinearDynamics,
    pol: &LinearGaussianPolicy,
    expert: &LinearGaussianPolicy,
    rng: &mut R,
    n_rollouts: usize,
) -> Result<JEstimate> {
    if n_rollouts == 0 {
        return Err(MobilError::invalid("n_rollouts must be at least 1"));
    }
    let loss = ImitationLoss::new(DMatrix::zeros(dyn_.state_dim(), dyn_.state_dim()), expert.k.clone(), &pol.sigma_a)?;
    let diff = &pol.k - &expert.k;
    let per_rollout: Vec<f64> = (0..n_rollouts)
        .map(|_| {
            let batch = rollout(dyn_, pol, rng);
            let total: f64 = batch
                .transitions
                .iter()
                .map(|tr| {
                    let u = &diff * &tr.s;
                    0.5 * u.dot(&(&loss.sigma_a_inv * &u))
                })
                .sum();
            total / batch.transitions.len() as f64
        })
        .collect();
    let n = n_rollouts as f64;
    let mean = per_rollout.iter().sum::<f64>() / n;
    let var = if n_rollouts > 1 {
        per_rollout.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(JEstimate { mean, std_error: (var / n).sqrt() })
}

/// Tracks per-coordinate state bounds; used to clip simulator inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNormalizer {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub seen: usize,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        RunningNormalizer {
            lower: DVector::from_element(dim, f64::INFINITY),
            upper: DVector::from_element(dim, f64::NEG_INFINITY),
            seen: 0,
        }
    }

    pub fn observe(&mut self, s: &DVector<f64>) {
        for i in 0..s.len() {
            self.lower[i] = self.lower[i].min(s[i]);
            self.upper[i] = self.upper[i].max(s[i]);
        }
        self.seen += 1;
    }

    pub fn observe_batch(&mut self, batch: &RolloutBatch) {
        for tr in &batch.transitions {
            self.observe(&tr.s);
            self.observe(&tr.s_next);
        }
    }

    pub fn clip(&self, s: &DVector<f64>) -> DVector<f64> {
        if self.seen == 0 {
            return s.clone();
        }
        DVector::from_iterator(s.len(), (0..s.len()).map(|i| s[i].clamp(self.lower[i], self.upper[i])))
    }

    /// Centers and scales to [−1, 1] using the tracked range.
    pub fn normalize(&self, s: &DVector<f64>) -> DVector<f64> {
        if self.seen == 0 {
            return s.clone();
        }
        DVector::from_iterator(
            s.len(),
            (0..s.len()).map(|i| {
                let half = 0.5 * (self.upper[i] - self.lower[i]);
                let mid = 0.5 * (self.upper[i] + self.lower[i]);
                if half > 0.0 {
                    (s[i] - mid) / half
                } else {
                    s[i] - mid
                }
            }),
        )
    }
}

/// Parameters of the randomly generated benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkParams {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub spectral_radius: f64,
    /// Operator norm of B.
    pub b_scale: f64,
    pub sigma_a: f64,
    pub sigma_w: f64,
    pub s0_mean: f64,
    pub s0_var: f64,
    /// Expert gain entries are uniform in [−expert_scale, expert_scale].
    pub expert_scale: f64,
    /// Policy entries are constrained to [−box_bound, box_bound].
    pub box_bound: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            state_dim: 4,
            action_dim: 2,
            horizon: 20,
            spectral_radius: 0.9,
            b_scale: 0.05,
            sigma_a: 0.1,
            sigma_w: 0.01,
            s0_mean: 1.0,
            s0_var: 0.1,
            expert_scale: 0.5,
            box_bound: 5.0,
        }
    }
}

/// A generated benchmark: true dynamics, expert and feasible gain box.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub dynamics: LinearDynamics,
    pub expert: LinearGaussianPolicy,
    pub set: FeasibleSet,
}

impl Benchmark {
    pub fn generate(params: &BenchmarkParams, seed: u64) -> Result<Self> {
        let ds = params.state_dim;
        let da = params.action_dim;
        if ds == 0 || da == 0 {
            return Err(MobilError::invalid("dimensions must be positive"));
        }
        if !(params.sigma_a > 0.0) || params.sigma_w < 0.0 || params.s0_var < 0.0 {
            return Err(MobilError::invalid("noise scales must be nonnegative and sigma_a positive"));
        }
        if !(params.box_bound > 0.0) || params.expert_scale > params.box_bound || params.expert_scale < 0.0 {
            return Err(MobilError::invalid("expert gains must lie inside the policy box"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_iterator(ds, ds, gaussian_vector(ds * ds, &mut rng).iter().copied());
        let rho = spectral_radius(&raw);
        let a = if rho > 0.0 { raw * (params.spectral_radius / rho) } else { raw };
        let raw_b = DMatrix::from_iterator(ds, da, gaussian_vector(ds * da, &mut rng).iter().copied());
        let b = raw_b.clone() * (params.b_scale / operator_norm(&raw_b).max(f64::MIN_POSITIVE));
        let k_star = DMatrix::from_iterator(
            da,
            ds,
            (0..da * ds).map(|_| params.expert_scale * (2.0 * rng.random::<f64>() - 1.0)),
        );
        let sigma_a = DMatrix::identity(da, da) * params.sigma_a;
        let dynamics = LinearDynamics::new(
            a,
            b,
            DMatrix::identity(ds, ds) * params.sigma_w,
            DVector::from_element(ds, params.s0_mean),
            DMatrix::identity(ds, ds) * params.s0_var,
            params.horizon,
        )?;
        let closed = spectral_radius(&(&dynamics.a + &dynamics.b * &k_star));
        if closed >= 1.2 {
            return Err(MobilError::Unstable(format!("expert closed loop has spectral radius {closed:.3}")));
        }
        let expert = LinearGaussianPolicy::new(k_star, sigma_a)?;
        let set = FeasibleSet::uniform_box(ds * da, -params.box_bound, params.box_bound)?;
        Ok(Benchmark { dynamics, expert, set })
    }

    pub fn policy_dim(&self) -> usize {
        self.expert.k.len()
    }

    pub fn k_star_vec(&self) -> Point {
        gain_to_vec(&self.expert.k)
    }

    pub fn gain(&self, pi: &Point) -> Result<DMatrix<f64>> {
        vec_to_gain(pi, self.dynamics.action_dim(), self.dynamics.state_dim())
    }

    /// Exact per-round loss f_n for policy π (noiseless mode).
    pub fn exact_loss(&self, pi: &Point) -> Result<ImitationLoss> {
        let k = self.gain(pi)?;
        let m = self.dynamics.averaged_second_moment(&k, &self.expert.sigma_a)?;
        ImitationLoss::new(m, self.expert.k.clone(), &self.expert.sigma_a)
    }

    /// Sampled per-round loss f̃_n from `batch_size` rollouts of π.
    pub fn sampled_loss<R: Rng + ?Sized>(&self, pi: &Point, batch_size: usize, rng: &mut R) -> Result<(ImitationLoss, RolloutBatch)> {
        let k = self.gain(pi)?;
        let pol = LinearGaussianPolicy::new(k, self.expert.sigma_a.clone())?;
        let batch = rollouts(&self.dynamics, &pol, batch_size, rng);
        let loss = ImitationLoss::new(batch.state_moment()?, self.expert.k.clone(), &self.expert.sigma_a)?;
        Ok((loss, batch))
    }

    pub fn j(&self, pi: &Point) -> Result<f64> {
        j_closed_form(&self.dynamics, &self.gain(pi)?, &self.expert.k, &self.expert.sigma_a)
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_dyn(a: f64, b: f64, horizon: usize) -> LinearDynamics {
        LinearDynamics::new(dmatrix![a], dmatrix![b], dmatrix![0.0], dvector![1.0], dmatrix![0.0], horizon).unwrap()
    }

    #[test]
    fn frozen_rollout() {
        let d = LinearDynamics::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            dvector![0.5, -1.0],
            DMatrix::zeros(2, 2),
            5,
        )
        .unwrap();
        let mut d2 = d.clone();
        d2.a = DMatrix::identity(2, 2);
        let pol = LinearGaussianPolicy::new(dmatrix![0.0, 0.0], dmatrix![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = rollout(&d2, &pol, &mut rng);
        assert_eq!(batch.transitions.len(), 5);
        assert!(batch.transitions.iter().all(|t| t.s == dvector![0.5, -1.0]));
    }

    #[test]
    fn rollout_is_seeded() {
        let d = scalar_dyn(0.9, 1.0, 10);
        let pol = LinearGaussianPolicy::new(dmatrix![0.2], dmatrix![0.3]).unwrap();
        let a = rollouts(&d, &pol, 3, &mut ChaCha8Rng::seed_from_u64(7));
        let b = rollouts(&d, &pol, 3, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn loss_vanishes_at_expert() {
        let bench = Benchmark::generate(&BenchmarkParams::default(), 0).unwrap();
        let loss = bench.exact_loss(&bench.k_star_vec()).unwrap();
        assert_eq!(loss.value(&bench.expert.k), 0.0);
        assert_eq!(loss.grad(&bench.expert.k).amax(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = simulator_gradient(
            &bench.dynamics,
            &bench.expert.k,
            &bench.expert.k,
            &bench.expert.sigma_a,
            SimulationMode::ClosedForm,
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let batch = RolloutBatch { transitions: vec![], policy_id: 0, seed: 0, simulated: false };
        assert!(il_loss_and_grad(&batch, &dmatrix![1.0], &dmatrix![0.0], &dmatrix![1.0]).is_err());
        assert!(model_transition_loss(&dmatrix![1.0], &dmatrix![1.0], &batch).is_err());
    }

    #[test]
    fn exact_model_zero_transition_loss() {
        let d = LinearDynamics::new(dmatrix![0.5, 0.1; 0.0, 0.8], dmatrix![1.0; 0.5], DMatrix::zeros(2, 2), dvector![1.0, 1.0], dmatrix![0.1, 0.0; 0.0, 0.1], 8).unwrap();
        let pol = LinearGaussianPolicy::new(dmatrix![0.1, -0.2], dmatrix![0.2]).unwrap();
        let batch = rollouts(&d, &pol, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let (v, ga, gb) = model_transition_loss(&d.a, &d.b, &batch).unwrap();
        assert!(v < 1e-24 && ga.amax() < 1e-12 && gb.amax() < 1e-12);
    }

    #[test]
    fn j_zero_at_expert() {
        let bench = Benchmark::generate(&BenchmarkParams::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = evaluate_j(&bench.dynamics, &bench.expert, &bench.expert, &mut rng, 5).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(bench.j(&bench.k_star_vec()).unwrap(), 0.0);
    }

    #[test]
    fn blow_up_is_rejected() {
        let d = scalar_dyn(3.0, 0.0, 60);
        assert!(matches!(d.averaged_second_moment(&dmatrix![0.0], &dmatrix![1.0]), Err(MobilError::Unstable(_))));
    }

    #[test]
    fn gain_round_trip() {
        let k = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        let v = gain_to_vec(&k);
        assert_eq!(v, dvector![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(vec_to_gain(&v, 2, 3).unwrap(), k);
    }
}
