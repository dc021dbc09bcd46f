use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mobil_bench::{affine_operator, bilinear_game, config, ProxFixture};
use mobil_core::vi::err_gap;
use mobil_core::{run_mobil, FeasibleSet, Point};

fn prox_round(c: &mut Criterion) {
    c.bench_function("mobil_prox_round/exact_model", |b| {
        b.iter_batched(ProxFixture::new, |mut f| f.round().unwrap(), criterion::BatchSize::SmallInput)
    });
}

fn moments(c: &mut Criterion) {
    let f = ProxFixture::new();
    let k = f.bench.expert.k.clone() * 0.5;
    c.bench_function("second_moments/horizon_20", |b| {
        b.iter(|| f.bench.dynamics.averaged_second_moment(black_box(&k), &f.bench.expert.sigma_a).unwrap())
    });
}

fn gaps(c: &mut Criterion) {
    let mut group = c.benchmark_group("err_gap");
    for dim in [3, 10, 30] {
        let op = bilinear_game(dim);
        let x = op.set.project(&Point::zeros(op.dim())).unwrap();
        group.bench_with_input(BenchmarkId::new("bilinear_exact", dim), &x, |b, x| b.iter(|| err_gap(&op, x).unwrap()));
    }
    let op = affine_operator(3);
    let x = Point::zeros(3);
    group.sample_size(10);
    group.bench_function("affine_sampled/3", |b| b.iter(|| err_gap(&op, &x).unwrap()));
    group.finish();
}

fn projections(c: &mut Criterion) {
    let mut group = c.benchmark_group("project");
    for dim in [10, 100, 1000] {
        let set = FeasibleSet::Simplex { dim };
        let x = Point::from_fn(dim, |i, _| ((i * 37) % 11) as f64 - 5.0);
        group.bench_with_input(BenchmarkId::new("simplex", dim), &x, |b, x| b.iter(|| set.project(x).unwrap()));
    }
    group.finish();
}

fn full_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_mobil");
    group.sample_size(10);
    for (name, text) in [
        ("prox_exact_128", "rounds=128\nmodel_oracle=exact\n"),
        ("prox_learned_128", "rounds=128\nmodel_oracle=learned\n"),
        ("vi_exact_128", "rounds=128\nalgorithm=mobil_vi\n"),
        ("mirror_prox_rps_512", "rounds=512\nalgorithm=mirror_prox\n"),
    ] {
        let cfg = config(text);
        group.bench_function(name, |b| b.iter(|| run_mobil(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, prox_round, moments, gaps, projections, full_runs);
criterion_main!(benches);
