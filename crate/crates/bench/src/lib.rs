//! Shared fixtures for the criterion benches.

use ndarray::Array2;
use rand::Rng;
use rlsp_core::tabular::{FeatureMap, TabularMdp};
use rlsp_core::util::seeded_rng;

/// Random MDP with `k` successors per state-action pair and one-hot-ish features.
pub fn random_mdp(num_states: usize, num_actions: usize, horizon: usize, seed: u64) -> (TabularMdp, FeatureMap) {
    let mut rng = seeded_rng(seed);
    let k = num_states.min(3);
    let transitions = (0..num_states * num_actions)
        .map(|_| {
            let raw: Vec<(usize, f64)> = (0..k)
                .map(|_| (rng.random_range(0..num_states), rng.random::<f64>() + 0.1))
                .collect();
            let total: f64 = raw.iter().map(|(_, p)| p).sum();
            raw.into_iter().map(|(s, p)| (s, p / total)).collect()
        })
        .collect();
    let init = vec![1.0 / num_states as f64; num_states];
    let mdp = TabularMdp::new(num_states, num_actions, transitions, init, horizon).expect("valid random MDP");
    let dim = 4;
    let features = FeatureMap::from_rows(
        (0..num_states)
            .map(|s| (0..dim).map(|j| if s % dim == j { 1.0 } else { 0.1 * j as f64 }).collect())
            .collect(),
    )
    .expect("valid features");
    (mdp, features)
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded_rng(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
}
