//! Property suites behind `mobil verify`.

use mobil_core::env::{il_loss_and_grad, model_transition_loss, rollouts};
use mobil_core::online::{ftl_lemma_audit, optima_shift_audit, play_ftl};
use mobil_core::schedules::{poly_sum_bracket, weight_prefix_sum};
use mobil_core::vi::equivalence_check;
use mobil_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

pub const SUITES: [&str; 7] =
    ["ftl_lemmas", "poly_sums", "optima_shift", "equivalence", "gradient_checks", "rates_fast", "rates_full"];

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

pub struct Report {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite,
            "passed": self.passed(),
            "total": self.checks.len(),
            "failures": self.checks.iter().filter(|c| !c.passed).count(),
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Runs a named suite; `None` for unknown names.
pub fn run_suite(name: &str) -> Option<Report> {
    let checks = match name {
        "ftl_lemmas" => ftl_lemmas(),
        "poly_sums" => poly_sums(),
        "optima_shift" => optima_shift(),
        "equivalence" => equivalence(),
        "gradient_checks" => gradient_checks(),
        "rates_fast" => rates_fast(),
        "rates_full" => rates_full(),
        _ => return None,
    };
    Some(Report { suite: name.to_string(), checks })
}

fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_quadratic(d: usize, floor: f64, rng: &mut ChaCha8Rng) -> QuadraticLoss {
    let g = gauss(d, d, rng);
    let h = g.transpose() * g + DMatrix::identity(d, d) * floor;
    let center = gauss(d, 1, rng).column(0) * 2.0;
    QuadraticLoss::centered(h, &center, 0.0).expect("PSD by construction")
}

fn to_check<T>(name: String, r: mobil_core::Result<T>, f: impl FnOnce(T) -> (bool, String)) -> Check {
    match r {
        Ok(v) => {
            let (ok, detail) = f(v);
            Check::new(name, ok, detail)
        }
        Err(e) => Check::new(name, false, format!("error: {e}")),
    }
}

fn ftl_lemmas() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..100)
        .map(|i| {
            let d = 1 + i % 3;
            let set = FeasibleSet::uniform_box(d, -2.0, 2.0).expect("valid box");
            let rounds = rng.random_range(2..10);
            let losses: Vec<QuadraticLoss> = (0..rounds).map(|_| random_quadratic(d, 0.05, &mut rng)).collect();
            let x1 = set.sample(&mut rng).expect("bounded set");
            let audit = play_ftl(&losses, &x1, &set).and_then(|played| ftl_lemma_audit(&losses, &played, &set));
            to_check(format!("instance {i}"), audit, |a| {
                let min_delta = a.delta_values.iter().copied().fold(f64::INFINITY, f64::min);
                let slack = a.strong_bound - a.regret;
                (
                    a.stronger_residual <= 1e-9 && min_delta >= -1e-9 && slack >= -1e-9,
                    format!("residual {:.2e}, min delta {min_delta:.2e}, slack {slack:.2e}", a.stronger_residual),
                )
            })
        })
        .collect()
}

fn poly_sums() -> Vec<Check> {
    let mut out = Vec::new();
    for p in [-1.0, -0.75, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0] {
        for n in [1usize, 2, 3, 10, 64, 100, 1000, 2048, 10_000] {
            let name = format!("p={p} N={n}");
            let (Some((lo, hi)), Ok(s)) = (poly_sum_bracket(n, p), weight_prefix_sum(n, p)) else {
                out.push(Check::new(name, false, "no bracket"));
                continue;
            };
            out.push(Check::new(name, lo <= s && s <= hi, format!("{lo:.6e} <= {s:.6e} <= {hi:.6e}")));
        }
    }
    out
}

fn optima_shift() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    (0..100)
        .map(|i| {
            let d = 1 + i % 4;
            let set = if i % 2 == 0 {
                FeasibleSet::Unconstrained { dim: d }
            } else {
                FeasibleSet::uniform_box(d, -1.0, 1.0).expect("valid box")
            };
            let f = random_quadratic(d, 0.1, &mut rng);
            let g = random_quadratic(d, 0.0, &mut rng);
            to_check(format!("pair {i}"), optima_shift_audit(&f, &g, &set), |s| {
                (
                    s.distance <= s.bound * (1.0 + 1e-9) + 1e-12,
                    format!("distance {:.4e} <= bound {:.4e}", s.distance, s.bound),
                )
            })
        })
        .collect()
}

fn equivalence() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    (0..10)
        .map(|i| {
            let d = 2 + i % 3;
            let g = gauss(d, d, &mut rng);
            let h = gauss(d, d, &mut rng);
            let m = (&g - g.transpose()) * 0.5 + h.transpose() * h * 0.1;
            let b = gauss(d, 1, &mut rng).column(0).into_owned();
            let x1 = gauss(d, 1, &mut rng).column(0).into_owned();
            let dev = MonotoneOperator::affine(m, b, FeasibleSet::Unconstrained { dim: d }).and_then(|op| {
                let steps = StepSchedule::Constant(0.5 / op.lipschitz);
                equivalence_check(&op, &x1, &steps, 100)
            });
            to_check(format!("affine instance {i}"), dev, |dev| (dev <= 1e-8, format!("max deviation {dev:.2e}")))
        })
        .collect()
}

fn central_difference(x: &DMatrix<f64>, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let h = 1e-6;
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (mut up, mut down) = (x.clone(), x.clone());
        up[(i, j)] += h;
        down[(i, j)] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

fn gradient_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    (0..50)
        .map(|i| {
            let params = BenchmarkParams { state_dim: 2 + i % 3, action_dim: 1 + i % 2, horizon: 5, ..Default::default() };
            let (ds, da) = (params.state_dim, params.action_dim);
            let k = gauss(da, ds, &mut rng) * 0.5;
            let a_hat = gauss(ds, ds, &mut rng) * 0.3;
            let b_hat = gauss(ds, da, &mut rng) * 0.3;
            let errs = Benchmark::generate(&params, 1000 + i as u64).and_then(|bench| {
                let (ks, sa) = (bench.expert.k.clone(), bench.expert.sigma_a.clone());
                let pol = LinearGaussianPolicy::new(k.clone(), sa.clone())?;
                let batch = rollouts(&bench.dynamics, &pol, 3, &mut rng);
                let (_, g) = il_loss_and_grad(&batch, &k, &ks, &sa)?;
                let fd = central_difference(&k, |kk| il_loss_and_grad(&batch, kk, &ks, &sa).map_or(f64::NAN, |r| r.0));
                let (_, ga, gb) = model_transition_loss(&a_hat, &b_hat, &batch)?;
                let fa = central_difference(&a_hat, |aa| model_transition_loss(aa, &b_hat, &batch).map_or(f64::NAN, |r| r.0));
                let fb = central_difference(&b_hat, |bb| model_transition_loss(&a_hat, bb, &batch).map_or(f64::NAN, |r| r.0));
                Ok((relative_error(&g, &fd), relative_error(&ga, &fa).max(relative_error(&gb, &fb))))
            });
            to_check(format!("benchmark {i}"), errs, |(ef, eh)| {
                (ef <= 1e-5 && eh <= 1e-5, format!("relative error f {ef:.2e}, h {eh:.2e}"))
            })
        })
        .collect()
}

/// Fits the regret column at n = 2^k (`dyadic`) or at every n in [n_min, rounds].
fn slope(cfg_text: &str, rounds: usize, n_min: f64, dyadic: bool) -> mobil_core::Result<RateFit> {
    let cfg = ExperimentConfig::parse_text(&format!("{cfg_text}\nrounds={rounds}\n"))?;
    let out = run_mobil(&cfg)?;
    let keep = |n: usize| !dyadic || n.is_power_of_two();
    let (ns, vs): (Vec<f64>, Vec<f64>) =
        out.trace.iter().filter(|r| keep(r.n)).map(|r| (r.n as f64, r.avg_weighted_regret)).unzip();
    fit_rate(&ns, &vs, n_min, rounds as f64)
}

const EXACT_PROX: &str = "algorithm=mobil_prox\nmodel_oracle=exact\np=2";
const BASELINE: &str = "algorithm=ftrl_baseline\nmodel_oracle=none\np=2";

/// Dyadic fits over [64, 2048] against the asymptotic slope bands.
fn rates_full() -> Vec<Check> {
    [("mobil_prox exact p=2", EXACT_PROX, (-2.4, -1.6)), ("ftrl_baseline p=2", BASELINE, (-1.3, -0.7))]
        .iter()
        .map(|(name, text, (lo, hi))| {
            to_check(format!("{name} slope over [64, 2048]"), slope(text, 2048, 64.0, true), |f| {
                (
                    (*lo..=*hi).contains(&f.slope),
                    format!("slope {:.3} (want [{lo}, {hi}]), r^2 {:.3}", f.slope, f.r_squared),
                )
            })
        })
        .collect()
}

/// Short runs: the baseline band and a slope gap of at least 0.5 in favour of the model.
fn rates_fast() -> Vec<Check> {
    let (prox, base) = (slope(EXACT_PROX, 512, 64.0, false), slope(BASELINE, 512, 64.0, false));
    let base_check = match &base {
        Ok(f) => Check::new(
            "ftrl_baseline p=2 slope over [64, 512]",
            (-1.3..=-0.7).contains(&f.slope),
            format!("slope {:.3} (want [-1.3, -0.7])", f.slope),
        ),
        Err(e) => Check::new("ftrl_baseline p=2 slope over [64, 512]", false, format!("error: {e}")),
    };
    let gap_check = match (&prox, &base) {
        (Ok(a), Ok(b)) => Check::new(
            "mobil_prox exact p=2 slope gap over [64, 512]",
            a.slope <= b.slope - 0.5,
            format!("model slope {:.3}, baseline slope {:.3} (want gap >= 0.5)", a.slope, b.slope),
        ),
        (a, b) => Check::new(
            "mobil_prox exact p=2 slope gap over [64, 512]",
            false,
            format!("error: {:?} / {:?}", a.as_ref().err(), b.as_ref().err()),
        ),
    };
    vec![base_check, gap_check]
}
