use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::Rng;
use std::hint::black_box;

use vadsim_core::adapt::AdaptationHyper;
use vadsim_core::detect::DetectorHyper;
use vadsim_core::eval::roc_auc;
use vadsim_core::nn::{init_mlp, mlp_forward, param_gradients, penalty_gradients, InitMode};
use vadsim_core::rng;
use vadsim_core::scenegen::{generate_incidents, GenerationSpec, SceneWorld};

const DIM: usize = 32;

fn batch(rows: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, &["bench"]);
    Array2::from_shape_fn((rows, DIM), |_| r.random_range(-2.0..2.0))
}

fn scorer(c: &mut Criterion) {
    let params = init_mlp(&DetectorHyper::default().scorer_spec(DIM), InitMode::HeUniform, 0).unwrap();
    let x = batch(24, 1);
    c.bench_function("scorer_forward_24x32", |b| b.iter(|| mlp_forward(&params, black_box(x.view())).unwrap()));
    let up = Array2::ones((24, 1));
    c.bench_function("scorer_param_gradients_24x32", |b| {
        b.iter(|| param_gradients(&params, black_box(x.view()), up.view()).unwrap())
    });
}

fn penalty(c: &mut Criterion) {
    let critic = init_mlp(&AdaptationHyper::default().critic_spec(DIM), InitMode::HeUniform, 0).unwrap();
    let x = batch(64, 2);
    c.bench_function("penalty_gradients_64x32", |b| {
        b.iter(|| penalty_gradients(&critic, black_box(x.view()), 10.0).unwrap())
    });
}

fn auc(c: &mut Criterion) {
    let mut group = c.benchmark_group("roc_auc");
    for n in [1_000usize, 100_000] {
        let mut r = rng::stream(n as u64, &["auc"]);
        let scores: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 100.0).round() / 100.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.15))).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| roc_auc(black_box(&scores), &labels).unwrap())
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let spec = GenerationSpec::default();
    let mut group = c.benchmark_group("generation");
    group.sample_size(10);
    group.bench_function("default_both_domains", |b| {
        b.iter(|| {
            let world = SceneWorld::new(&spec).unwrap();
            generate_incidents(&spec, &world).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, scorer, penalty, auc, generation);
criterion_main!(benches);
