use mobil_core::geometry::*;
use nalgebra::dvector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn projection_examples() {
    let b = FeasibleSet::uniform_box(1, -1.0, 1.0).unwrap();
    assert_eq!(b.project(&dvector![1.5]).unwrap(), dvector![1.0]);
    assert_eq!(b.project(&dvector![0.25]).unwrap(), dvector![0.25]);
    let ball = FeasibleSet::ball(dvector![0.0, 0.0], 1.0).unwrap();
    let p = ball.project(&dvector![3.0, 4.0]).unwrap();
    assert!((p - dvector![0.6, 0.8]).norm() < 1e-15);
    let free = FeasibleSet::Unconstrained { dim: 2 };
    assert_eq!(free.project(&dvector![7.0, -3.0]).unwrap(), dvector![7.0, -3.0]);
}

#[test]
fn simplex_projection_matches_grid() {
    // Euclidean projection onto the 2-simplex, brute force over the segment.
    let s = FeasibleSet::Simplex { dim: 2 };
    for x in [dvector![0.9, 0.4], dvector![-1.0, 3.0], dvector![0.2, 0.1]] {
        let p = s.project(&x).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=100_000 {
            let t = i as f64 / 100_000.0;
            let d = (x[0] - t).powi(2) + (x[1] - 1.0 + t).powi(2);
            if d < best.0 {
                best = (d, t);
            }
        }
        assert!((p[0] - best.1).abs() < 2e-5, "{p:?} vs {}", best.1);
    }
}

#[test]
fn bregman_examples() {
    let l2 = BregmanGenerator::SquaredL2;
    assert_eq!(bregman(l2, &dvector![3.0], &dvector![1.0]).unwrap(), 2.0);
    let x = dvector![0.3, -1.2, 4.0];
    assert_eq!(bregman(l2, &x, &x).unwrap(), 0.0);

    let ent = BregmanGenerator::NegEntropy;
    let kl = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let b = bregman(ent, &dvector![0.5, 0.5], &dvector![0.25, 0.75]).unwrap();
    assert!((b - kl).abs() < 1e-15);
    assert!((b - 0.14384).abs() < 1e-5);
    assert!(bregman(ent, &dvector![0.5, 0.5], &dvector![0.0, 1.0]).is_err());
}

#[test]
fn prox_examples() {
    let l2 = BregmanGenerator::SquaredL2;
    let free = FeasibleSet::Unconstrained { dim: 2 };
    assert_eq!(prox_step(l2, &free, &dvector![1.0, 2.0], &dvector![0.5, -1.0]).unwrap(), dvector![0.5, 3.0]);
    let b = FeasibleSet::uniform_box(2, -1.0, 1.0).unwrap();
    assert_eq!(prox_step(l2, &b, &dvector![0.5, 0.5], &dvector![2.0, -0.25]).unwrap(), dvector![-1.0, 0.75]);
    assert!(prox_step(l2, &b, &dvector![2.0, 0.0], &dvector![0.0, 0.0]).is_err());
}

#[test]
fn entropy_prox_is_multiplicative_weights_and_matches_grid() {
    let ent = BregmanGenerator::NegEntropy;
    let s = FeasibleSet::Simplex { dim: 2 };
    let y = dvector![0.3, 0.7];
    let v = dvector![0.8, -0.4];
    let out = prox_step(ent, &s, &y, &v).unwrap();
    let z = 0.3 * (-0.8f64).exp() + 0.7 * 0.4f64.exp();
    assert!((out[0] - 0.3 * (-0.8f64).exp() / z).abs() < 1e-14);
    let mut best = (f64::INFINITY, 0.0);
    for i in 1..100_000 {
        let t = i as f64 / 100_000.0;
        let x = dvector![t, 1.0 - t];
        let obj = v.dot(&x) + bregman(ent, &x, &y).unwrap();
        if obj < best.0 {
            best = (obj, t);
        }
    }
    assert!((out[0] - best.1).abs() < 2e-5);
}

#[test]
fn omega_sq_closed_forms() {
    let l2 = BregmanGenerator::SquaredL2;
    assert_eq!(l2.omega_sq(&FeasibleSet::uniform_box(2, -1.0, 1.0).unwrap()), 4.0);
    assert_eq!(l2.omega_sq(&FeasibleSet::ball(dvector![0.0], 2.0).unwrap()), 8.0);
    assert_eq!(l2.omega_sq(&FeasibleSet::Simplex { dim: 3 }), 1.0);
    assert!(l2.omega_sq(&FeasibleSet::Unconstrained { dim: 1 }).is_infinite());
}

#[test]
fn sampling_stays_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sets = [
        FeasibleSet::uniform_box(3, -2.0, 1.0).unwrap(),
        FeasibleSet::ball(dvector![1.0, 1.0], 0.5).unwrap(),
        FeasibleSet::Simplex { dim: 4 },
        FeasibleSet::Product(vec![FeasibleSet::Simplex { dim: 2 }, FeasibleSet::Simplex { dim: 3 }]),
    ];
    for s in &sets {
        for _ in 0..200 {
            assert!(s.contains(&s.sample(&mut rng).unwrap(), 1e-12));
        }
    }
    assert!(FeasibleSet::Unconstrained { dim: 2 }.sample(&mut rng).is_err());
}
