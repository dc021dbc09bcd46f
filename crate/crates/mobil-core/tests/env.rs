use mobil_core::env::*;
use nalgebra::{dmatrix, dvector, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn deterministic(a: f64, b: f64, horizon: usize) -> LinearDynamics {
    LinearDynamics::new(dmatrix![a], dmatrix![b], dmatrix![0.0], dvector![1.0], dmatrix![0.0], horizon).unwrap()
}

fn tiny_action_noise(k: f64) -> LinearGaussianPolicy {
    LinearGaussianPolicy::new(dmatrix![k], dmatrix![1.0]).unwrap()
}

#[test]
fn rollout_geometric_decay() {
    let sys = deterministic(0.5, 0.0, 8);
    let batch = rollout(&sys, &tiny_action_noise(0.0), &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(batch.transitions.len(), 8);
    for tr in &batch.transitions {
        assert!((tr.s[0] - 0.5f64.powi(tr.t as i32)).abs() < 1e-15);
        assert!((tr.s_next[0] - 0.5f64.powi(tr.t as i32 + 1)).abs() < 1e-15);
    }
}

#[test]
fn rollout_frozen_state() {
    let sys = deterministic(1.0, 0.0, 5);
    let batch = rollouts(&sys, &tiny_action_noise(3.0), 4, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(batch.transitions.len(), 20);
    assert!(batch.transitions.iter().all(|tr| tr.s[0] == 1.0 && tr.s_next[0] == 1.0));
    assert!((batch.state_moment().unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
}

#[test]
fn rollouts_are_seeded() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 0).unwrap();
    let a = rollouts(&bench.dynamics, &bench.expert, 3, &mut ChaCha8Rng::seed_from_u64(5));
    let b = rollouts(&bench.dynamics, &bench.expert, 3, &mut ChaCha8Rng::seed_from_u64(5));
    let c = rollouts(&bench.dynamics, &bench.expert, 3, &mut ChaCha8Rng::seed_from_u64(6));
    assert_eq!(a, b);
    assert_ne!(a.transitions, c.transitions);
}

#[test]
fn imitation_loss_scalar() {
    let l = ImitationLoss::new(dmatrix![1.0], dmatrix![0.0], &dmatrix![1.0]).unwrap();
    assert_eq!(l.value(&dmatrix![1.0]), 0.5);
    assert_eq!(l.grad(&dmatrix![1.0]), dmatrix![1.0]);
    assert_eq!(l.value(&dmatrix![0.0]), 0.0);
}

#[test]
fn imitation_gradient_matches_finite_differences() {
    let s = dmatrix![2.0, 0.3; 0.3, 1.0];
    let l = ImitationLoss::new(s, dmatrix![0.5, -0.2], &dmatrix![0.4]).unwrap();
    let k = dmatrix![1.0, 0.7];
    let g = l.grad(&k);
    for j in 0..2 {
        let mut e = DMatrix::zeros(1, 2);
        e[(0, j)] = 1e-6;
        let fd = (l.value(&(&k + &e)) - l.value(&(&k - &e))) / 2e-6;
        assert!((fd - g[(0, j)]).abs() < 1e-6);
    }
}

#[test]
fn j_scalar() {
    let sys = deterministic(0.0, 0.0, 1);
    assert!((j_closed_form(&sys, &dmatrix![1.0], &dmatrix![0.0], &dmatrix![1.0]).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn moments_without_dynamics() {
    // A = B = 0: E[s₀²] = 1 + v, later steps carry only the process noise.
    let sys = LinearDynamics::new(dmatrix![0.0], dmatrix![0.0], dmatrix![0.2], dvector![1.0], dmatrix![0.5], 4).unwrap();
    let ms = sys.second_moments(&dmatrix![9.0], &dmatrix![1.0]).unwrap();
    assert!((ms[0][(0, 0)] - 1.5).abs() < 1e-15);
    assert!(ms[1..].iter().all(|m| (m[(0, 0)] - 0.2).abs() < 1e-15));
    let avg = sys.averaged_second_moment(&dmatrix![9.0], &dmatrix![1.0]).unwrap();
    assert!((avg[(0, 0)] - (1.5 + 3.0 * 0.2) / 4.0).abs() < 1e-15);
    let g = simulator_gradient(&sys, &dmatrix![2.0], &dmatrix![1.0], &dmatrix![0.5], SimulationMode::ClosedForm, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!((g[(0, 0)] - (1.0 / 0.5) * 1.0 * (1.5 + 0.6) / 4.0).abs() < 1e-14);
}

#[test]
fn monte_carlo_j_agrees_with_closed_form() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 0).unwrap();
    let k = &bench.expert.k + DMatrix::from_element(2, 4, 0.3);
    let pol = LinearGaussianPolicy::new(k.clone(), bench.expert.sigma_a.clone()).unwrap();
    let mc = evaluate_j(&bench.dynamics, &pol, &bench.expert, &mut ChaCha8Rng::seed_from_u64(4), 10_000).unwrap();
    let exact = j_closed_form(&bench.dynamics, &k, &bench.expert.k, &bench.expert.sigma_a).unwrap();
    assert!((mc.mean - exact).abs() <= 3.0 * mc.std_error, "{} vs {exact} (se {})", mc.mean, mc.std_error);
    assert!(evaluate_j(&bench.dynamics, &pol, &bench.expert, &mut ChaCha8Rng::seed_from_u64(0), 0).is_err());
}

#[test]
fn sampled_gradients_average_to_simulator_gradient() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 0).unwrap();
    let k = &bench.expert.k * 0.5;
    let exact = simulator_gradient(&bench.dynamics, &k, &bench.expert.k, &bench.expert.sigma_a, SimulationMode::ClosedForm, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let pol = LinearGaussianPolicy::new(k.clone(), bench.expert.sigma_a.clone()).unwrap();
    let samples: Vec<DMatrix<f64>> = (0..50)
        .map(|seed| {
            let batch = rollouts(&bench.dynamics, &pol, 20, &mut ChaCha8Rng::seed_from_u64(seed));
            il_loss_and_grad(&batch, &k, &bench.expert.k, &bench.expert.sigma_a).unwrap().1
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DMatrix::zeros(2, 4), |a, g| a + g) / n;
    for idx in 0..mean.len() {
        let var = samples.iter().map(|g| (g[idx] - mean[idx]).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean[idx] - exact[idx]).abs() <= 4.0 * se + 1e-12, "entry {idx}");
    }
}

#[test]
fn monte_carlo_simulator_is_consistent() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 1).unwrap();
    let k = bench.expert.k.clone() * 0.8;
    let cf = simulator_gradient(&bench.dynamics, &k, &bench.expert.k, &bench.expert.sigma_a, SimulationMode::ClosedForm, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mc = simulator_gradient(&bench.dynamics, &k, &bench.expert.k, &bench.expert.sigma_a, SimulationMode::MonteCarlo { rollouts: 4000 }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!((cf - mc).amax() < 0.05);
    assert!(simulator_gradient(&bench.dynamics, &k, &bench.expert.k, &bench.expert.sigma_a, SimulationMode::MonteCarlo { rollouts: 0 }, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn transition_loss_excess_is_quadratic_in_model_error() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 2).unwrap();
    let k = bench.expert.k.clone();
    let stats = bench.dynamics.transition_moments(&k, &bench.expert.sigma_a).unwrap();
    let theta = bench.dynamics.theta();
    let noise = bench.dynamics.sigma_w.trace();
    assert!((stats.loss(&theta) - noise).abs() < 1e-12);
    let delta = DMatrix::from_fn(4, 6, |i, j| 0.01 * (i as f64 - j as f64));
    let excess = (&delta * &stats.zz * delta.transpose()).trace();
    assert!((stats.loss(&(&theta + &delta)) - noise - excess).abs() < 1e-12);
    assert!(stats.grad(&theta).amax() < 1e-12);
    assert!(stats.modulus() > 0.0);
}

#[test]
fn batch_transition_loss_agrees_with_stats() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 3).unwrap();
    let batch = rollouts(&bench.dynamics, &bench.expert, 2, &mut ChaCha8Rng::seed_from_u64(9));
    let a_hat = &bench.dynamics.a * 0.9;
    let b_hat = &bench.dynamics.b * 1.1;
    let (v, ga, gb) = model_transition_loss(&a_hat, &b_hat, &batch).unwrap();
    let mut theta = DMatrix::zeros(4, 6);
    theta.view_mut((0, 0), (4, 4)).copy_from(&a_hat);
    theta.view_mut((0, 4), (4, 2)).copy_from(&b_hat);
    let stats = batch.transition_stats().unwrap();
    assert!((v - stats.loss(&theta)).abs() < 1e-12);
    let g = stats.grad(&theta);
    assert!((g.view((0, 0), (4, 4)) - ga).amax() < 1e-12);
    assert!((g.view((0, 4), (4, 2)) - gb).amax() < 1e-12);
}

#[test]
fn benchmark_is_seeded_and_well_formed() {
    let p = BenchmarkParams::default();
    let a = Benchmark::generate(&p, 7).unwrap();
    assert_eq!(a, Benchmark::generate(&p, 7).unwrap());
    assert_ne!(a.dynamics.a, Benchmark::generate(&p, 8).unwrap().dynamics.a);
    assert!((spectral_radius(&a.dynamics.a) - p.spectral_radius).abs() < 1e-9);
    assert!((operator_norm(&a.dynamics.b) - p.b_scale).abs() < 1e-9);
    assert!(a.set.contains(&a.k_star_vec(), 0.0));
    assert_eq!(a.gain(&a.k_star_vec()).unwrap(), a.expert.k);
    assert!(a.j(&a.k_star_vec()).unwrap().abs() < 1e-15);
}

#[test]
fn benchmark_rejects_bad_params() {
    let base = BenchmarkParams::default();
    for bad in [
        BenchmarkParams { state_dim: 0, ..base.clone() },
        BenchmarkParams { sigma_a: 0.0, ..base.clone() },
        BenchmarkParams { expert_scale: 10.0, ..base.clone() },
    ] {
        assert!(Benchmark::generate(&bad, 0).is_err());
    }
}

#[test]
fn dynamics_validation() {
    assert!(LinearDynamics::new(dmatrix![1.0], dmatrix![1.0], dmatrix![-1.0], dvector![0.0], dmatrix![0.0], 1).is_err());
    assert!(LinearDynamics::new(dmatrix![1.0], dmatrix![1.0], dmatrix![0.0], dvector![0.0], dmatrix![0.0], 0).is_err());
    assert!(LinearGaussianPolicy::new(dmatrix![1.0], dmatrix![0.0]).is_err());
}

#[test]
fn exploding_moments_are_reported() {
    let sys = LinearDynamics::new(dmatrix![10.0], dmatrix![0.0], dmatrix![0.0], dvector![1.0], dmatrix![0.0], 40).unwrap();
    assert!(matches!(sys.second_moments(&dmatrix![0.0], &dmatrix![1.0]), Err(mobil_core::MobilError::Unstable(_))));
}

#[test]
fn simulator_gradient_vanishes_at_expert() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 4).unwrap();
    let wrong = LinearDynamics { a: &bench.dynamics.a * 0.3, ..bench.dynamics.clone() };
    for mode in [SimulationMode::ClosedForm, SimulationMode::MonteCarlo { rollouts: 3 }] {
        let g = simulator_gradient(&wrong, &bench.expert.k, &bench.expert.k, &bench.expert.sigma_a, mode, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(g.amax(), 0.0);
    }
}

#[test]
fn batch_loss_scalar_examples() {
    let sys = LinearDynamics::new(dmatrix![0.0], dmatrix![0.0], dmatrix![0.0], dvector![1.0], dmatrix![0.0], 1).unwrap();
    let batch = rollout(&sys, &tiny_action_noise(2.0), &mut ChaCha8Rng::seed_from_u64(0));
    let (v, g) = il_loss_and_grad(&batch, &dmatrix![2.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
    assert_eq!((v, g[(0, 0)]), (0.5, 1.0));
    let (v, g) = il_loss_and_grad(&batch, &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
    assert_eq!((v, g[(0, 0)]), (0.0, 0.0));
    let empty = RolloutBatch { transitions: vec![], policy_id: 0, seed: 0, simulated: false };
    assert!(il_loss_and_grad(&empty, &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).is_err());
}

#[test]
fn transition_loss_offset_is_delta_squared() {
    // Unit states with no action effect: h̃(A + δ) = δ².
    let sys = LinearDynamics::new(dmatrix![1.0], dmatrix![0.3], dmatrix![0.0], dvector![1.0], dmatrix![0.0], 6).unwrap();
    let batch = rollout(&sys, &tiny_action_noise(0.0), &mut ChaCha8Rng::seed_from_u64(2));
    let (zero, _, _) = model_transition_loss(&dmatrix![1.0], &dmatrix![0.3], &batch).unwrap();
    assert!(zero < 1e-28);
    let sys = deterministic(1.0, 0.0, 6);
    let batch = rollout(&sys, &tiny_action_noise(0.0), &mut ChaCha8Rng::seed_from_u64(2));
    let (v, _, _) = model_transition_loss(&dmatrix![1.25], &dmatrix![0.0], &batch).unwrap();
    assert!((v - 0.0625).abs() < 1e-15);
}

#[test]
fn doubling_rollouts_halves_variance() {
    let bench = Benchmark::generate(&BenchmarkParams::default(), 0).unwrap();
    let pol = LinearGaussianPolicy::new(&bench.expert.k * 0.2, bench.expert.sigma_a.clone()).unwrap();
    let se = |n| evaluate_j(&bench.dynamics, &pol, &bench.expert, &mut ChaCha8Rng::seed_from_u64(n as u64), n).unwrap().std_error;
    let ratio = (se(2000) / se(4000)).powi(2);
    assert!((1.6..2.5).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn noiseless_learner_drives_transition_loss_to_zero() {
    use mobil_core::mobil::{model_ftl_update, ModelLearnerState, ModelUpdate};
    let params = BenchmarkParams { sigma_w: 0.0, ..Default::default() };
    let bench = Benchmark::generate(&params, 0).unwrap();
    let mut learner = ModelLearnerState::new(4, 2, ModelUpdate::Ftl);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut losses = Vec::new();
    for n in 1..=3 {
        let batch = rollouts(&bench.dynamics, &bench.expert, 2, &mut rng);
        let stats = batch.transition_stats().unwrap();
        losses.push(stats.loss(&learner.estimate));
        model_ftl_update(&mut learner, &stats, n, 2.0).unwrap();
    }
    assert!(losses[0] > 0.0);
    assert!(losses[1] < 1e-12 * losses[0] && losses[2] < 1e-12 * losses[0], "{losses:?}");
}
