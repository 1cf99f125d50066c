//! Policy similarity measured by how quickly a small classifier learns to
//! tell their trajectories apart.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::continuous::{run_episode, ContinuousEnv, Controller};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Normalizer, Optimizer, OptimizerKind};
use crate::util::{seeded_rng, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub seeds: Vec<u64>,
    /// Consecutive observations per classifier input.
    pub window: usize,
    pub hidden: usize,
    /// Episodes per policy; the last fifth of them is held out for accuracy.
    pub episodes: usize,
    pub train_steps: usize,
    pub eval_every: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            window: 5,
            hidden: 10,
            episodes: 10,
            train_steps: 500,
            eval_every: 10,
            batch_size: 64,
            learning_rate: 1e-2,
        }
    }
}

/// Held-out accuracy after each evaluated training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCurves {
    pub steps: Vec<usize>,
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl SimilarityCurves {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "mean".to_string()];
        header.extend((0..self.per_seed.len()).map(|i| format!("seed_{i}")));
        w.write_record(&header)?;
        for (k, step) in self.steps.iter().enumerate() {
            let mut row = vec![step.to_string(), self.mean[k].to_string()];
            row.extend(self.per_seed.iter().map(|c| c[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flattened windows of `window` observations from each episode.
fn windows(env: &ContinuousEnv, policy: &dyn Controller, episodes: usize, window: usize, rng: &mut SimRng) -> Vec<Vec<Vec<f64>>> {
    (0..episodes)
        .map(|_| {
            let mut obs = Vec::new();
            run_episode(env, policy, rng, |_, s| obs.push(env.observe(s)));
            obs.windows(window).map(|w| w.concat()).collect()
        })
        .collect()
}

fn to_array(rows: &[(Vec<f64>, f64)], dim: usize) -> (Array2<f64>, Vec<f64>) {
    let mut x = Array2::zeros((rows.len(), dim));
    for (mut r, (v, _)) in x.rows_mut().into_iter().zip(rows) {
        r.assign(&ndarray::ArrayView1::from(v));
    }
    (x, rows.iter().map(|(_, y)| *y).collect())
}

fn accuracy(net: &Mlp, x: &Array2<f64>, y: &[f64]) -> f64 {
    let logits = net.forward(x);
    let hits = logits.column(0).iter().zip(y).filter(|(z, y)| (**z > 0.0) == (**y > 0.5)).count();
    hits as f64 / y.len() as f64
}

fn one_seed(env: &ContinuousEnv, a: &dyn Controller, b: &dyn Controller, cfg: &DiscriminatorConfig, seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rng = seeded_rng(seed);
    let held_out = (cfg.episodes / 5).max(1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, policy) in [(0.0, a), (1.0, b)] {
        for (i, ep) in windows(env, policy, cfg.episodes, cfg.window, &mut rng).into_iter().enumerate() {
            let dest = if i < cfg.episodes - held_out { &mut train } else { &mut test };
            dest.extend(ep.into_iter().map(|w| (w, label)));
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::State("episodes are too short to form observation windows".into()));
    }
    let dim = cfg.window * env.obs_dim();
    let (xtr, ytr) = to_array(&train, dim);
    let (xte, yte) = to_array(&test, dim);
    let norm = Normalizer::fit(&xtr)?;
    let (xtr, xte) = (norm.apply(&xtr), norm.apply(&xte));

    let mut net = Mlp::new(&[dim, cfg.hidden, 1], Activation::Relu, &mut rng)?;
    let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..ytr.len()).collect();
    let mut cursor = order.len();
    let (mut steps, mut curve) = (vec![0], vec![accuracy(&net, &xte, &yte)]);
    for step in 1..=cfg.train_steps {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + cfg.batch_size).min(order.len())];
        cursor += cfg.batch_size;
        let xb = xtr.select(ndarray::Axis(0), idx);
        let cache = net.forward_cached(&xb);
        // d/dz of binary cross-entropy on logits is sigmoid(z) - y
        let mut g = Array2::zeros((idx.len(), 1));
        for (k, &i) in idx.iter().enumerate() {
            let z = cache.output[[k, 0]];
            g[[k, 0]] = (1.0 / (1.0 + (-z).exp()) - ytr[i]) / idx.len() as f64;
        }
        let (grads, _) = net.backward(&cache, &g);
        opt.step(&mut net, &grads);
        if step % cfg.eval_every == 0 || step == cfg.train_steps {
            steps.push(step);
            curve.push(accuracy(&net, &xte, &yte));
        }
    }
    Ok((steps, curve))
}

/// Trains one classifier per seed to separate windows of the two policies'
/// observations, reporting held-out accuracy against training steps.
pub fn discriminator_similarity(
    policy_a: &dyn Controller,
    policy_b: &dyn Controller,
    env: &ContinuousEnv,
    cfg: &DiscriminatorConfig,
) -> Result<SimilarityCurves> {
    if cfg.seeds.is_empty() || cfg.window == 0 || cfg.hidden == 0 || cfg.episodes < 2 || cfg.eval_every == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("discriminator settings must be positive, with at least 2 episodes and 1 seed".into()));
    }
    let mut steps = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let (s, c) = one_seed(env, policy_a, policy_b, cfg, seed)?;
        steps = s;
        per_seed.push(c);
    }
    let mean = (0..steps.len())
        .map(|k| per_seed.iter().map(|c| c[k]).sum::<f64>() / per_seed.len() as f64)
        .collect();
    Ok(SimilarityCurves { steps, per_seed, mean })
}
