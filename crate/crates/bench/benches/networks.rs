use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rlsp_bench::random_batch;
use rlsp_core::continuous::{optimize_policy, ContinuousEnv, EnvName, RewardFn, SoftQConfig};
use rlsp_core::nn::{Activation, MixtureDensity, MixtureDensityHead, Mlp};
use rlsp_core::util::seeded_rng;

fn mlp(c: &mut Criterion) {
    let net = Mlp::new(&[8, 128, 128, 128, 4], Activation::Relu, &mut seeded_rng(0)).unwrap();
    let x = random_batch(64, 8, 1);
    c.bench_function("mlp_forward_batch64", |b| b.iter(|| net.forward(black_box(&x))));
    c.bench_function("mlp_forward_backward_batch64", |b| {
        b.iter(|| {
            let cache = net.forward_cached(black_box(&x));
            net.backward(&cache, &Array2::ones((64, 4)))
        })
    });
    let row = x.row(0).to_vec();
    c.bench_function("mlp_predict_one", |b| b.iter(|| net.predict_one(black_box(&row))));
}

fn density(c: &mut Criterion) {
    let head = MixtureDensityHead::default();
    let net = Mlp::new(&[8, 64, 64, head.components * 2], Activation::Relu, &mut seeded_rng(0)).unwrap();
    let mdn = MixtureDensity::untrained(net, head, 1).unwrap();
    let x = random_batch(1, 8, 2).row(0).to_vec();
    let mut rng = seeded_rng(3);
    c.bench_function("mdn_sample", |b| b.iter(|| mdn.sample(black_box(&x), &mut rng)));
    c.bench_function("mdn_log_prob", |b| b.iter(|| mdn.log_prob(black_box(&x), &[0.2])));
}

fn soft_q(c: &mut Criterion) {
    let env = ContinuousEnv::new(EnvName::Pendulum);
    let cfg = SoftQConfig {
        budget: 500,
        ..SoftQConfig::default()
    };
    let mut group = c.benchmark_group("soft_q");
    group.sample_size(10);
    group.bench_function("pendulum_500_steps", |b| {
        b.iter(|| optimize_policy(&env, RewardFn::True, black_box(&cfg), &mut seeded_rng(0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mlp, density, soft_q);
criterion_main!(benches);
