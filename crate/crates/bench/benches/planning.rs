use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rlsp_bench::random_mdp;
use rlsp_core::deep::{compute_grad, InversePrior, ObservedStateSet, ReplayBuffer, TabularBackend, TrainableBackend};
use rlsp_core::planning::soft_value_iteration;
use rlsp_core::rlsp::{exact_state_gradient, infer_reward, RlspConfig};
use rlsp_core::tabular::{build_gridworld, RewardParams};
use rlsp_core::util::seeded_rng;

fn soft_vi(c: &mut Criterion) {
    let (mdp, features) = random_mdp(200, 5, 20, 0);
    let theta = RewardParams::new(vec![0.5, -0.2, 0.1, 0.3]).unwrap();
    c.bench_function("soft_vi_200x5_h20", |b| {
        b.iter(|| soft_value_iteration(black_box(&mdp), &features, &theta).unwrap())
    });
}

fn exact_gradient(c: &mut Criterion) {
    let case = build_gridworld("room_vase").unwrap();
    let theta = RewardParams::new(vec![0.1; case.features.dim()]).unwrap();
    let t = case.mdp.horizon();
    c.bench_function("exact_state_gradient_room_vase", |b| {
        b.iter(|| exact_state_gradient(&case.mdp, &case.features, black_box(&theta), case.observed_state, t, true).unwrap())
    });
    let cfg = RlspConfig {
        horizon_t: t,
        iterations: 20,
        ..RlspConfig::default()
    };
    c.bench_function("infer_reward_room_vase_20_iters", |b| {
        b.iter(|| infer_reward(&case.mdp, &case.features, black_box(case.observed_state), &cfg).unwrap())
    });
}

fn sampled_gradient(c: &mut Criterion) {
    let case = build_gridworld("batteries").unwrap();
    let mut backend = TabularBackend::new(case.mdp.clone(), case.features.clone(), InversePrior::Uniform);
    let theta = vec![0.1; case.features.dim()];
    let mut rng = seeded_rng(0);
    backend.refresh_policy(&theta, 5, &mut rng).unwrap();
    backend.refresh_inverse(&ReplayBuffer::new(1), 5, &mut rng).unwrap();
    let obs = ObservedStateSet::new(vec![case.observed_state]).unwrap();
    c.bench_function("compute_grad_batteries_t5_200", |b| {
        b.iter(|| compute_grad(&obs, &backend, 5, 200, &mut rng, None).unwrap())
    });
}

criterion_group!(benches, soft_vi, exact_gradient, sampled_gradient);
criterion_main!(benches);
