//! Experiment configuration and the round-by-round driver.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{evaluate_j, Benchmark, BenchmarkParams, LinearGaussianPolicy, SimulationMode};
use crate::error::{MobilError, Result};
use crate::geometry::{BregmanGenerator, FeasibleSet, Point};
use crate::mobil::{mobil_prox_round, mobil_vi_round, GradientOracle, ModelKind, ModelUpdate, PredictiveModel, ProxState, ViSolver};
use crate::online::{ftrl_update, AnchoredRegularizer, QuadraticLoss, RegretLedger};
use crate::schedules::{
    regularizer_coeff_schedule, sample_output_index, AdaptiveStepConfig, ConvexityMode, EtaMode, StepState,
    WeightSchedule,
};
use crate::vi::{err_gap, mirror_prox_run, stochastic_step, MirrorProxConfig, MonotoneOperator, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    MobilProx,
    MobilVi,
    FtrlBaseline,
    MirrorProx,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::MobilProx => "mobil_prox",
            Algorithm::MobilVi => "mobil_vi",
            Algorithm::FtrlBaseline => "ftrl_baseline",
            Algorithm::MirrorProx => "mirror_prox",
        }
    }
}

impl FromStr for Algorithm {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mobil_prox" => Algorithm::MobilProx,
            "mobil_vi" => Algorithm::MobilVi,
            "ftrl_baseline" => Algorithm::FtrlBaseline,
            "mirror_prox" => Algorithm::MirrorProx,
            other => return Err(MobilError::invalid(format!("unknown algorithm `{other}`"))),
        })
    }
}

/// How the per-round regularizer coefficient w_n α_n μ_f is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerRule {
    /// Cumulative (1 + c n^e)/η_n with adaptive η_n.
    Adaptive,
    /// w_n α μ_f with constant α and the measured per-round μ_f.
    ConstantAlpha,
}

impl RegularizerRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegularizerRule::Adaptive => "adaptive",
            RegularizerRule::ConstantAlpha => "constant_alpha",
        }
    }
}

impl FromStr for RegularizerRule {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(RegularizerRule::Adaptive),
            "constant_alpha" => Ok(RegularizerRule::ConstantAlpha),
            other => Err(MobilError::invalid(format!("unknown regularizer rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViProblem {
    RockPaperScissors,
    /// Random Gaussian payoff over two simplices of size `vi.dim`.
    RandomBilinear,
    /// Random monotone affine operator on the box [−1, 1]^dim.
    RandomAffine,
}

impl ViProblem {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViProblem::RockPaperScissors => "rps",
            ViProblem::RandomBilinear => "bilinear",
            ViProblem::RandomAffine => "affine",
        }
    }
}

impl FromStr for ViProblem {
    type Err = MobilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rps" => Ok(ViProblem::RockPaperScissors),
            "bilinear" => Ok(ViProblem::RandomBilinear),
            "affine" => Ok(ViProblem::RandomAffine),
            other => Err(MobilError::invalid(format!("unknown VI problem `{other}`"))),
        }
    }
}

fn generator_name(g: BregmanGenerator) -> &'static str {
    match g {
        BregmanGenerator::SquaredL2 => "squared_l2",
        BregmanGenerator::NegEntropy => "entropy",
    }
}

fn parse_generator(s: &str) -> Result<BregmanGenerator> {
    match s {
        "squared_l2" => Ok(BregmanGenerator::SquaredL2),
        "entropy" => Ok(BregmanGenerator::NegEntropy),
        other => Err(MobilError::invalid(format!("unknown generator `{other}`"))),
    }
}

/// Flat, fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub model_oracle: ModelKind,
    pub p: f64,
    pub rounds: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub noiseless: bool,
    pub convexity_mode: ConvexityMode,
    pub schedule_rule: RegularizerRule,
    /// Growth exponent in convex mode; `None` means p + 1/2.
    pub schedule_k: Option<f64>,
    pub schedule_alpha: f64,
    pub step: AdaptiveStepConfig,
    pub model_convexity: ConvexityMode,
    /// Growth exponent of the model regularizer; `None` means p − 1/2.
    pub model_k: Option<f64>,
    pub model_eta: f64,
    pub mc_rollouts: usize,
    pub adversarial_radius: f64,
    pub env: BenchmarkParams,
    pub env_seed: u64,
    pub normalizer: bool,
    pub mu_floor: f64,
    /// Monte-Carlo rollouts for J; zero means the closed form.
    pub eval_rollouts: usize,
    pub vi_problem: ViProblem,
    pub vi_dim: usize,
    /// Constant step; `None` picks the theoretical step for the run.
    pub vi_gamma: Option<f64>,
    pub vi_noise: f64,
    pub vi_generator: BregmanGenerator,
    pub vi_weighted: bool,
    pub output_svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::MobilProx,
            model_oracle: ModelKind::ExactSimulator,
            p: 2.0,
            rounds: 100,
            seed: 0,
            batch_size: 4,
            noiseless: true,
            convexity_mode: ConvexityMode::StronglyConvex,
            schedule_rule: RegularizerRule::Adaptive,
            schedule_k: None,
            schedule_alpha: 1.0,
            step: AdaptiveStepConfig { eta: 2e-3, mode: EtaMode::Normalized, ..Default::default() },
            model_convexity: ConvexityMode::StronglyConvex,
            model_k: None,
            model_eta: 1.0,
            mc_rollouts: 0,
            adversarial_radius: 1.0,
            env: BenchmarkParams::default(),
            env_seed: 0,
            normalizer: false,
            mu_floor: 1e-8,
            eval_rollouts: 0,
            vi_problem: ViProblem::RockPaperScissors,
            vi_dim: 3,
            vi_gamma: None,
            vi_noise: 0.0,
            vi_generator: BregmanGenerator::SquaredL2,
            vi_weighted: false,
            output_svg: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| format!("{key}: cannot parse `{value}` ({e})"))
}

fn parse_opt(key: &str, value: &str) -> std::result::Result<Option<f64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Sets one dotted key. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "algorithm" => self.algorithm = parse(key, v)?,
            "model_oracle" => self.model_oracle = parse(key, v)?,
            "p" => self.p = parse(key, v)?,
            "rounds" => self.rounds = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "noiseless" => self.noiseless = parse(key, v)?,
            "convexity_mode" => self.convexity_mode = parse(key, v)?,
            "schedule.rule" => self.schedule_rule = parse(key, v)?,
            "schedule.k" => self.schedule_k = parse_opt(key, v)?,
            "schedule.alpha" => self.schedule_alpha = parse(key, v)?,
            "step.eta" => self.step.eta = parse(key, v)?,
            "step.c" => self.step.c = parse(key, v)?,
            "step.beta" => self.step.beta = parse(key, v)?,
            "step.eta_mode" => self.step.mode = parse::<EtaMode>(key, v)?,
            "model.convexity_mode" => self.model_convexity = parse(key, v)?,
            "model.k" => self.model_k = parse_opt(key, v)?,
            "model.eta" => self.model_eta = parse(key, v)?,
            "model.mc_rollouts" => self.mc_rollouts = parse(key, v)?,
            "model.adversarial_radius" => self.adversarial_radius = parse(key, v)?,
            "env.state_dim" => self.env.state_dim = parse(key, v)?,
            "env.action_dim" => self.env.action_dim = parse(key, v)?,
            "env.horizon" => self.env.horizon = parse(key, v)?,
            "env.spectral_radius" => self.env.spectral_radius = parse(key, v)?,
            "env.b_scale" => self.env.b_scale = parse(key, v)?,
            "env.sigma_a" => self.env.sigma_a = parse(key, v)?,
            "env.sigma_w" => self.env.sigma_w = parse(key, v)?,
            "env.s0_mean" => self.env.s0_mean = parse(key, v)?,
            "env.s0_var" => self.env.s0_var = parse(key, v)?,
            "env.expert_scale" => self.env.expert_scale = parse(key, v)?,
            "env.box" => self.env.box_bound = parse(key, v)?,
            "env.seed" => self.env_seed = parse(key, v)?,
            "env.normalizer" => self.normalizer = parse(key, v)?,
            "env.mu_floor" => self.mu_floor = parse(key, v)?,
            "eval.rollouts" => self.eval_rollouts = parse(key, v)?,
            "vi.problem" => self.vi_problem = parse(key, v)?,
            "vi.dim" => self.vi_dim = parse(key, v)?,
            "vi.gamma" => self.vi_gamma = parse_opt(key, v)?,
            "vi.noise" => self.vi_noise = parse(key, v)?,
            "vi.generator" => self.vi_generator = parse_generator(v).map_err(|e| format!("{key}: {e}"))?,
            "vi.weighted" => self.vi_weighted = parse(key, v)?,
            "output.svg" => self.output_svg = parse(key, v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// All keys with their resolved values, in canonical order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("algorithm", self.algorithm.as_str().to_string()),
            ("model_oracle", self.model_oracle.as_str().to_string()),
            ("p", self.p.to_string()),
            ("rounds", self.rounds.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("noiseless", self.noiseless.to_string()),
            ("convexity_mode", self.convexity_mode.as_str().to_string()),
            ("schedule.rule", self.schedule_rule.as_str().to_string()),
            ("schedule.k", show_opt(self.schedule_k)),
            ("schedule.alpha", self.schedule_alpha.to_string()),
            ("step.eta", self.step.eta.to_string()),
            ("step.c", self.step.c.to_string()),
            ("step.beta", self.step.beta.to_string()),
            ("step.eta_mode", self.step.mode.as_str().to_string()),
            ("model.convexity_mode", self.model_convexity.as_str().to_string()),
            ("model.k", show_opt(self.model_k)),
            ("model.eta", self.model_eta.to_string()),
            ("model.mc_rollouts", self.mc_rollouts.to_string()),
            ("model.adversarial_radius", self.adversarial_radius.to_string()),
            ("env.state_dim", self.env.state_dim.to_string()),
            ("env.action_dim", self.env.action_dim.to_string()),
            ("env.horizon", self.env.horizon.to_string()),
            ("env.spectral_radius", self.env.spectral_radius.to_string()),
            ("env.b_scale", self.env.b_scale.to_string()),
            ("env.sigma_a", self.env.sigma_a.to_string()),
            ("env.sigma_w", self.env.sigma_w.to_string()),
            ("env.s0_mean", self.env.s0_mean.to_string()),
            ("env.s0_var", self.env.s0_var.to_string()),
            ("env.expert_scale", self.env.expert_scale.to_string()),
            ("env.box", self.env.box_bound.to_string()),
            ("env.seed", self.env_seed.to_string()),
            ("env.normalizer", self.normalizer.to_string()),
            ("env.mu_floor", self.mu_floor.to_string()),
            ("eval.rollouts", self.eval_rollouts.to_string()),
            ("vi.problem", self.vi_problem.as_str().to_string()),
            ("vi.dim", self.vi_dim.to_string()),
            ("vi.gamma", show_opt(self.vi_gamma)),
            ("vi.noise", self.vi_noise.to_string()),
            ("vi.generator", generator_name(self.vi_generator).to_string()),
            ("vi.weighted", self.vi_weighted.to_string()),
            ("output.svg", self.output_svg.to_string()),
        ]
    }

    /// Every recognized key.
    pub fn keys() -> Vec<&'static str> {
        ExperimentConfig::default().pairs().into_iter().map(|(k, _)| k).collect()
    }

    /// `key=value` lines in canonical order; equal configs give equal text.
    pub fn canonical(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies `key=value` assignments over the defaults, then validates.
    /// Every bad line and every invalid field is reported together.
    pub fn from_assignments<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut errors = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in lines.into_iter().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key=value, got `{line}`", i + 1));
                continue;
            };
            let k = k.trim();
            if seen.insert(k.to_string(), i + 1).is_some() {
                errors.push(format!("line {}: duplicate key `{k}`", i + 1));
                continue;
            }
            if let Err(e) = cfg.set(k, v) {
                errors.push(format!("line {}: {e}", i + 1));
            }
        }
        if let Err(MobilError::Config(more)) = cfg.validate() {
            errors.extend(more);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(MobilError::Config(errors))
        }
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        ExperimentConfig::from_assignments(text.lines())
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        need(self.rounds >= 1, "rounds must be at least 1");
        need(self.p.is_finite() && self.p >= -1.0, "p must be a finite real >= -1");
        need(self.noiseless || self.batch_size >= 1, "batch_size must be at least 1 in stochastic mode");
        need(self.step.eta > 0.0 && self.step.eta.is_finite(), "step.eta must be positive");
        need(self.step.c >= 0.0 && self.step.c.is_finite(), "step.c must be nonnegative");
        need((0.0..1.0).contains(&self.step.beta), "step.beta must lie in [0, 1)");
        need(self.schedule_alpha > 0.0 && self.schedule_alpha.is_finite(), "schedule.alpha must be positive");
        need(self.schedule_k.is_none_or(|k| k.is_finite() && k >= 0.0), "schedule.k must be a nonnegative real");
        need(
            self.schedule_rule == RegularizerRule::Adaptive || self.convexity_mode == ConvexityMode::StronglyConvex,
            "schedule.rule=constant_alpha needs convexity_mode=strongly_convex",
        );
        need(self.model_k.is_none_or(|k| k.is_finite() && k >= 0.0), "model.k must be a nonnegative real");
        need(self.model_eta > 0.0 && self.model_eta.is_finite(), "model.eta must be positive");
        need(
            self.adversarial_radius >= 0.0 && self.adversarial_radius.is_finite(),
            "model.adversarial_radius must be nonnegative",
        );
        need(self.env.state_dim >= 1, "env.state_dim must be at least 1");
        need(self.env.action_dim >= 1, "env.action_dim must be at least 1");
        need(self.env.horizon >= 1, "env.horizon must be at least 1");
        need(self.env.spectral_radius >= 0.0 && self.env.spectral_radius.is_finite(), "env.spectral_radius must be nonnegative");
        need(self.env.b_scale >= 0.0 && self.env.b_scale.is_finite(), "env.b_scale must be nonnegative");
        need(self.env.sigma_a > 0.0 && self.env.sigma_a.is_finite(), "env.sigma_a must be positive");
        need(self.env.sigma_w >= 0.0 && self.env.sigma_w.is_finite(), "env.sigma_w must be nonnegative");
        need(self.env.s0_var >= 0.0 && self.env.s0_var.is_finite(), "env.s0_var must be nonnegative");
        need(self.env.s0_mean.is_finite(), "env.s0_mean must be finite");
        need(self.env.box_bound > 0.0 && self.env.box_bound.is_finite(), "env.box must be positive");
        need(
            self.env.expert_scale >= 0.0 && self.env.expert_scale <= self.env.box_bound,
            "env.expert_scale must lie in [0, env.box]",
        );
        need(self.mu_floor >= 0.0 && self.mu_floor.is_finite(), "env.mu_floor must be nonnegative");
        need(self.vi_dim >= 1, "vi.dim must be at least 1");
        need(self.vi_gamma.is_none_or(|g| g > 0.0 && g.is_finite()), "vi.gamma must be positive");
        need(self.vi_noise >= 0.0 && self.vi_noise.is_finite(), "vi.noise must be nonnegative");
        need(
            self.vi_generator == BregmanGenerator::SquaredL2 || self.vi_problem != ViProblem::RandomAffine,
            "vi.generator=entropy needs a game over simplices",
        );
        if self.algorithm == Algorithm::MobilVi {
            need(
                !matches!(self.model_oracle, ModelKind::BoundedRandom) && self.mc_rollouts == 0,
                "mobil_vi needs a deterministic model (no adversarial oracle, model.mc_rollouts=0)",
            );
        }
        if self.algorithm == Algorithm::FtrlBaseline {
            need(self.model_oracle == ModelKind::Zero, "ftrl_baseline takes model_oracle=none");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(MobilError::Config(errs))
        }
    }

    pub fn weight_schedule(&self) -> WeightSchedule {
        match self.convexity_mode {
            ConvexityMode::StronglyConvex => WeightSchedule::new(self.p),
            ConvexityMode::Convex => WeightSchedule::convex(self.p, self.schedule_k.unwrap_or(self.p + 0.5)),
        }
    }

    pub fn model_update(&self) -> ModelUpdate {
        match self.model_convexity {
            ConvexityMode::StronglyConvex => ModelUpdate::Ftl,
            ConvexityMode::Convex => {
                ModelUpdate::Ftrl { k: self.model_k.unwrap_or((self.p - 0.5).max(0.0)), c: self.step.c, eta: self.model_eta }
            }
        }
    }

    pub fn simulation_mode(&self) -> SimulationMode {
        if self.mc_rollouts == 0 {
            SimulationMode::ClosedForm
        } else {
            SimulationMode::MonteCarlo { rollouts: self.mc_rollouts }
        }
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub w_n: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub pred_err_sq: f64,
    pub model_loss: f64,
    pub pi_gap: f64,
    pub avg_weighted_regret: f64,
    pub j_estimate: f64,
    pub err_gap: Option<f64>,
    pub gamma_n: Option<f64>,
}

pub const TRACE_COLUMNS: [&str; 9] =
    ["n", "w_n", "loss", "grad_norm", "pred_err_sq", "model_loss", "pi_gap", "avg_weighted_regret", "J_estimate"];

pub const VI_COLUMNS: [&str; 2] = ["err_gap", "gamma_n"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    /// π_1, …, π_N (x_1, …, x_N for Mirror-Prox).
    pub iterates: Vec<Point>,
    /// K with π̄_N = π_K.
    pub output_index: usize,
    pub output_policy: Point,
    /// Mirror-Prox weighted average x̄_N.
    pub average: Option<Point>,
}

/// Independent random streams for the separate purposes of a run.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Rollouts = 1,
    Model = 2,
    Output = 3,
    Eval = 4,
    Problem = 5,
    Noise = 6,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Executes one configured experiment.
pub fn run_mobil(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::MirrorProx => run_mirror_prox(cfg),
        _ => run_policy_learning(cfg),
    }
}

struct RoundData {
    loss: QuadraticLoss,
    grad: Point,
    value: f64,
    mu: f64,
    stats: crate::env::TransitionStats,
    moment: DMatrix<f64>,
}

fn observe_round<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    model: &mut PredictiveModel,
    pi: &Point,
    rng: &mut R,
) -> Result<RoundData> {
    let k = bench.gain(pi)?;
    let (il, stats) = if cfg.noiseless {
        (bench.exact_loss(pi)?, bench.dynamics.transition_moments(&k, &bench.expert.sigma_a)?)
    } else {
        let (il, batch) = bench.sampled_loss(pi, cfg.batch_size, rng)?;
        if let Some(norm) = model.normalizer.as_mut() {
            norm.observe_batch(&batch);
        }
        (il, batch.transition_stats()?)
    };
    let mu = il.modulus();
    if !(mu >= cfg.mu_floor) {
        return Err(MobilError::invalid(format!(
            "insufficient excitation: round loss modulus {mu:e} is below env.mu_floor {:e}",
            cfg.mu_floor
        )));
    }
    let grad = crate::env::gain_to_vec(&il.grad(&k));
    Ok(RoundData { value: il.value(&k), loss: il.quadratic()?, grad, mu, moment: il.state_moment, stats })
}

fn run_policy_learning(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let bench = Benchmark::generate(&cfg.env, cfg.env_seed)?;
    let set = bench.set.clone();
    let d = bench.policy_dim();
    let mut roll_rng = stream(cfg.seed, Stream::Rollouts);
    let model_seed = stream(cfg.seed, Stream::Model).random::<u64>();
    let mut eval_rng = stream(cfg.seed, Stream::Eval);
    let mut model = PredictiveModel::new(cfg.model_oracle, &bench, cfg.simulation_mode(), cfg.model_update(), model_seed)
        .with_radius(cfg.adversarial_radius)
        .with_normalizer(cfg.normalizer);
    let sched = cfg.weight_schedule();
    let pi1 = Point::zeros(d);
    let mut prox = ProxState::new(pi1.clone());
    let mut ftrl_reg = AnchoredRegularizer::new(d);
    let mut grad_sum = Point::zeros(d);
    let mut f_sum = QuadraticLoss::zero(d);
    let mut ledger = RegretLedger::new(d);
    let mut step_state = StepState::default();
    let mut pi = pi1;
    let mut pi_hat = pi.clone();
    let mut g_hat = Point::zeros(d);
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut iterates = Vec::with_capacity(cfg.rounds);
    let mut weights = Vec::with_capacity(cfg.rounds);

    for n in 1..=cfg.rounds {
        let w = sched.weight(n);
        let round = observe_round(cfg, &bench, &mut model, &pi, &mut roll_rng)?;
        let model_loss = model.transition_loss(&round.stats).unwrap_or(f64::NAN);
        let err = &round.grad - &g_hat;
        ledger.record(w, &round.loss, &pi);
        let j = if cfg.eval_rollouts == 0 {
            bench.j(&pi)?
        } else {
            let pol = LinearGaussianPolicy::new(bench.gain(&pi)?, bench.expert.sigma_a.clone())?;
            evaluate_j(&bench.dynamics, &pol, &bench.expert, &mut eval_rng, cfg.eval_rollouts)?.mean
        };
        trace.push(TraceRecord {
            n,
            w_n: w,
            loss: round.value,
            grad_norm: round.grad.norm(),
            pred_err_sq: err.norm_squared(),
            model_loss,
            pi_gap: (&pi - &pi_hat).norm(),
            avg_weighted_regret: ledger.average_regret(&set)?,
            j_estimate: j,
            err_gap: None,
            gamma_n: None,
        });
        iterates.push(pi.clone());
        weights.push(w);
        model.observe(n, cfg.p, &round.stats, &round.moment)?;
        let lambda = step_state.observe(err.norm(), cfg.step.beta);
        if n == cfg.rounds {
            break;
        }
        let reg = match cfg.schedule_rule {
            RegularizerRule::Adaptive => regularizer_coeff_schedule(n, &sched, &cfg.step, cfg.step.eta_n(lambda))?,
            RegularizerRule::ConstantAlpha => w * cfg.schedule_alpha * round.mu,
        };
        let w_next = sched.weight(n + 1);
        match cfg.algorithm {
            Algorithm::MobilProx => {
                mobil_prox_round(&mut prox, &round.grad, w, reg, w_next, &mut model, &set)?;
                pi = prox.pi.clone();
                pi_hat = prox.pi_hat.clone();
                g_hat = prox.g_hat.clone();
            }
            Algorithm::FtrlBaseline => {
                ftrl_reg.add(reg, &pi)?;
                grad_sum += &round.grad * w;
                pi = ftrl_update(&grad_sum, &ftrl_reg, &set)?;
                pi_hat = pi.clone();
            }
            Algorithm::MobilVi => {
                f_sum.add_scaled(&round.loss, w);
                pi = mobil_vi_round(&f_sum, &mut model, w_next, &set, ViSolver::default())?;
                g_hat = model.predict(&pi)?;
                pi_hat = pi.clone();
            }
            Algorithm::MirrorProx => unreachable!("handled separately"),
        }
    }
    let mut out_rng = stream(cfg.seed, Stream::Output);
    let k = sample_output_index(&weights, &mut out_rng)?;
    Ok(RunOutput { output_policy: iterates[k - 1].clone(), output_index: k, trace, iterates, average: None })
}

/// Builds the VI problem of a configuration.
pub fn build_operator(cfg: &ExperimentConfig) -> Result<MonotoneOperator> {
    let mut rng = stream(cfg.seed, Stream::Problem);
    let d = cfg.vi_dim;
    match cfg.vi_problem {
        ViProblem::RockPaperScissors => Ok(MonotoneOperator::rock_paper_scissors()),
        ViProblem::RandomBilinear => {
            let a = DMatrix::from_iterator(d, d, crate::geometry::gaussian_vector(d * d, &mut rng).iter().copied());
            MonotoneOperator::bilinear(a)
        }
        ViProblem::RandomAffine => {
            let g = DMatrix::from_iterator(d, d, crate::geometry::gaussian_vector(d * d, &mut rng).iter().copied());
            let skew = (&g - g.transpose()) * 0.5;
            let h = DMatrix::from_iterator(d, d, crate::geometry::gaussian_vector(d * d, &mut rng).iter().copied());
            let m = skew + h.transpose() * &h * (0.1 / d as f64);
            let b = crate::geometry::gaussian_vector(d, &mut rng);
            MonotoneOperator::affine(m, b, FeasibleSet::uniform_box(d, -1.0, 1.0)?)
        }
    }
}

fn centre_of(set: &FeasibleSet) -> Point {
    match set {
        FeasibleSet::Box { lower, upper } => (lower + upper) * 0.5,
        FeasibleSet::Ball { center, .. } => center.clone(),
        FeasibleSet::Simplex { dim } => Point::from_element(*dim, 1.0 / *dim as f64),
        FeasibleSet::Product(parts) => crate::geometry::concat(&parts.iter().map(centre_of).collect::<Vec<_>>()),
        FeasibleSet::Unconstrained { dim } => Point::zeros(*dim),
    }
}

fn run_mirror_prox(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let op = build_operator(cfg)?;
    let gen = cfg.vi_generator;
    let omega_sq = gen.omega_sq(&op.set);
    let lip = op.lipschitz.max(f64::MIN_POSITIVE);
    let steps = if cfg.vi_weighted {
        StepSchedule::Weighted { p: cfg.p }
    } else {
        let gamma = match cfg.vi_gamma {
            Some(g) => g,
            None if cfg.vi_noise > 0.0 && omega_sq.is_finite() => {
                stochastic_step(omega_sq, lip, gen.alpha(), cfg.vi_noise, cfg.rounds)
            }
            None => gen.alpha() / (2f64.sqrt() * lip),
        };
        StepSchedule::Constant(gamma)
    };
    let mp_cfg = MirrorProxConfig { steps, generator: gen, noise_sigma: cfg.vi_noise, extrapolate_first: true };
    let x1 = centre_of(&op.set);
    let mut rng = stream(cfg.seed, Stream::Noise);
    let run = mirror_prox_run(&op, &mp_cfg, &x1, cfg.rounds, &mut rng)?;
    let averages = run.running_averages();
    let mut trace = Vec::with_capacity(cfg.rounds);
    for (i, avg) in averages.iter().enumerate() {
        let x = &run.trace.x[i];
        let g = &run.trace.g[i];
        let gamma = run.trace.gamma[i];
        let gap = err_gap(&op, avg)?;
        trace.push(TraceRecord {
            n: i + 1,
            w_n: gamma,
            loss: err_gap(&op, x)?.value,
            grad_norm: gen.dual_norm(g),
            pred_err_sq: (g - &run.trace.g_hat[i]).norm_squared(),
            model_loss: f64::NAN,
            pi_gap: (x - &run.trace.x_hat[i]).norm(),
            avg_weighted_regret: gap.value,
            j_estimate: f64::NAN,
            err_gap: Some(gap.value),
            gamma_n: Some(gamma),
        });
    }
    let mut out_rng = stream(cfg.seed, Stream::Output);
    let k = sample_output_index(&run.trace.gamma, &mut out_rng)?;
    Ok(RunOutput {
        output_policy: run.trace.x[k - 1].clone(),
        output_index: k,
        trace,
        iterates: run.trace.x.clone(),
        average: Some(run.x_bar),
    })
}
