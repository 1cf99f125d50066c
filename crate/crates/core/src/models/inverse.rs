//! Learned inverse models for continuous environments.
//!
//! Inverse dynamics predicts the residual `s − s'` from the observation of
//! `s'` and the action, so that `s_prev = s_next + r̂`. The inverse policy is a
//! mixture density over the previous action given features of the next state.

use log::warn;
use ndarray::Array2;

use crate::continuous::{ContinuousEnv, Controller};
use crate::deep::ReplayBuffer;
use crate::error::{Error, Result};
use crate::nn::{train_density_model, train_regressor, ApproximatorConfig, EncoderDecoder, MixtureDensity, MixtureDensityHead, Normalizer, Regressor};
use crate::util::SimRng;

use super::dataset::InteractionDataset;

/// Gaussian noise added to normalized inputs and labels of the inverse dynamics.
pub const INVERSE_DYNAMICS_NOISE_STD: f64 = 0.001;

#[derive(Debug, Clone)]
pub struct InverseDynamics {
    env: ContinuousEnv,
    model: Regressor,
    clip_lo: Vec<f64>,
    clip_hi: Vec<f64>,
    noise_std: f64,
}

fn dynamics_input(env: &ContinuousEnv, s_next: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = env.observe(s_next);
    x.extend_from_slice(a);
    x
}

impl InverseDynamics {
    pub fn model(&self) -> &Regressor {
        &self.model
    }

    /// Per-dimension input mean and std used for normalization.
    pub fn input_stats(&self) -> &Normalizer {
        &self.model.input_norm
    }

    /// Smallest and largest residual seen in training, per state dimension.
    pub fn clip_bounds(&self) -> (&[f64], &[f64]) {
        (&self.clip_lo, &self.clip_hi)
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Predicted residual `s − s'`, clipped to the training range.
    pub fn residual(&self, s_next: &[f64], a: &[f64]) -> Vec<f64> {
        let raw = self.model.predict_one(&dynamics_input(&self.env, s_next, a));
        raw.iter()
            .zip(self.clip_lo.iter().zip(&self.clip_hi))
            .map(|(r, (lo, hi))| r.clamp(*lo, *hi))
            .collect()
    }

    /// `s_prev = s_next + r̂(s_next, a)`.
    pub fn predict_prev(&self, s_next: &[f64], a: &[f64]) -> Vec<f64> {
        apply_residual(s_next, &self.residual(s_next, a))
    }
}

pub fn apply_residual(s_next: &[f64], residual: &[f64]) -> Vec<f64> {
    s_next.iter().zip(residual).map(|(s, r)| s + r).collect()
}

/// Trains the residual inverse dynamics on normalized, noise-perturbed data.
pub fn train_inverse_dynamics(env: &ContinuousEnv, dataset: &InteractionDataset, cfg: &ApproximatorConfig) -> Result<InverseDynamics> {
    if dataset.is_empty() {
        return Err(Error::arg("inverse dynamics needs a nonempty dataset"));
    }
    if dataset.env() != env.name() {
        return Err(Error::arg("dataset was collected in a different environment"));
    }
    let n = dataset.len();
    let in_dim = env.obs_dim() + env.action_dim();
    let sd = env.state_dim();
    let mut x = Array2::zeros((n, in_dim));
    let mut y = Array2::zeros((n, sd));
    let mut lo = vec![f64::INFINITY; sd];
    let mut hi = vec![f64::NEG_INFINITY; sd];
    for (i, t) in dataset.transitions().iter().enumerate() {
        for (j, v) in dynamics_input(env, &t.next, &t.a).into_iter().enumerate() {
            x[[i, j]] = v;
        }
        for d in 0..sd {
            let r = t.s[d] - t.next[d];
            y[[i, d]] = r;
            lo[d] = lo[d].min(r);
            hi[d] = hi[d].max(r);
        }
    }
    let cfg = ApproximatorConfig {
        normalize_inputs: true,
        normalize_targets: true,
        input_noise_std: INVERSE_DYNAMICS_NOISE_STD,
        target_noise_std: INVERSE_DYNAMICS_NOISE_STD,
        ..cfg.clone()
    };
    let model = train_regressor(&x, &y, &cfg)?;
    Ok(InverseDynamics {
        env: env.clone(),
        model,
        clip_lo: lo,
        clip_hi: hi,
        noise_std: INVERSE_DYNAMICS_NOISE_STD,
    })
}

/// Input representation of the inverse policy.
#[derive(Debug, Clone)]
pub enum PolicyInput {
    /// The environment observation of `s'`.
    Observation,
    /// Encoder features of the observation of `s'`.
    Encoder(EncoderDecoder),
}

impl PolicyInput {
    pub fn input(&self, env: &ContinuousEnv, s: &[f64]) -> Vec<f64> {
        match self {
            PolicyInput::Observation => env.observe(s),
            PolicyInput::Encoder(e) => e.encode(&env.observe(s)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InversePolicy {
    env: ContinuousEnv,
    input: PolicyInput,
    density: MixtureDensity,
}

impl InversePolicy {
    pub fn density(&self) -> &MixtureDensity {
        &self.density
    }

    /// Samples `a_prev ∼ π⁻¹(· | s_next)`, clipped to the action bounds.
    pub fn sample(&self, s_next: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let x = self.input.input(&self.env, s_next);
        self.density
            .sample(&x, rng)
            .into_iter()
            .zip(self.env.action_bounds())
            .map(|(a, (lo, hi))| a.clamp(lo, hi))
            .collect()
    }
}

/// Labels `num_samples` replay states with the forward policy and the true
/// simulator, then fits `p(a | features(s'))`.
pub fn train_inverse_policy<C: Controller + ?Sized>(
    replay: &ReplayBuffer<Vec<f64>, Vec<f64>>,
    forward_policy: &C,
    env: &ContinuousEnv,
    input: PolicyInput,
    num_samples: usize,
    cfg: &ApproximatorConfig,
    head: MixtureDensityHead,
    rng: &mut SimRng,
) -> Result<InversePolicy> {
    if replay.is_empty() {
        return Err(Error::State("inverse policy needs a nonempty replay buffer".into()));
    }
    if num_samples == 0 {
        return Err(Error::arg("num_samples must be at least 1"));
    }
    let mut xs = Vec::with_capacity(num_samples);
    let mut ys = Vec::with_capacity(num_samples);
    for (s, _, _) in replay.sample(num_samples, rng) {
        let a = forward_policy.act(env, s, rng);
        let next = env.transition(s, &a).state;
        xs.push(input.input(env, &next));
        ys.push(a);
    }
    let x = rows_to_array(&xs)?;
    let y = rows_to_array(&ys)?;
    let density = train_density_model(&x, &y, cfg, head)?;
    if !density.final_loss.is_finite() {
        warn!("inverse policy finished with a non-finite loss");
    }
    Ok(InversePolicy {
        env: env.clone(),
        input,
        density,
    })
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::arg(e.to_string()))
}

/// One step back in time: `a_prev ∼ π⁻¹(·|s_next)`, `s_prev = s_next + r̂(s_next, a_prev)`.
pub fn backward_step(inv_dyn: &InverseDynamics, inv_pol: &InversePolicy, s_next: &[f64], rng: &mut SimRng) -> (Vec<f64>, Vec<f64>) {
    let a = inv_pol.sample(s_next, rng);
    let prev = inv_dyn.predict_prev(s_next, &a);
    (a, prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{EnvName, Scripted};
    use crate::models::{collect_dataset, DatasetSource};
    use crate::util::seeded_rng;

    #[test]
    fn residual_formula_is_plain_addition() {
        assert_eq!(apply_residual(&[1.0, -2.0], &[0.25, 0.5]), vec![1.25, -1.5]);
    }

    fn runner_models(seed: u64) -> (ContinuousEnv, InverseDynamics) {
        let env = ContinuousEnv::new(EnvName::RunnerForward);
        let mut rng = seeded_rng(seed);
        let ds = collect_dataset(&env, DatasetSource::RandomRollouts, 40, 50, &mut rng).unwrap();
        let cfg = ApproximatorConfig { epochs: 30, ..ApproximatorConfig::regressor_desk() };
        let inv = train_inverse_dynamics(&env, &ds, &cfg).unwrap();
        (env, inv)
    }

    #[test]
    fn linear_dynamics_are_inverted() {
        let (env, inv) = runner_models(0);
        let held_out = collect_dataset(&env, DatasetSource::RandomRollouts, 5, 50, &mut seeded_rng(99)).unwrap();
        let mut sq = 0.0;
        for t in held_out.transitions() {
            let prev = inv.predict_prev(&t.next, &t.a);
            sq += (prev[0] - t.s[0]).powi(2) + (prev[1] - t.s[1]).powi(2);
        }
        let rmse = (sq / (2 * held_out.len()) as f64).sqrt();
        assert!(rmse < 1e-2, "{rmse}");
    }

    #[test]
    fn outputs_stay_within_clip_bounds() {
        let (_, inv) = runner_models(1);
        let (lo, hi) = inv.clip_bounds();
        let (lo, hi) = (lo.to_vec(), hi.to_vec());
        for v in [-30.0, -10.0, 10.0, 30.0] {
            for a in [-10.0, 10.0] {
                let r = inv.residual(&[0.0, v], &[a]);
                for d in 0..2 {
                    assert!(r[d] >= lo[d] && r[d] <= hi[d]);
                }
            }
        }
    }

    #[test]
    fn constant_forward_policy_is_recovered() {
        let env = ContinuousEnv::new(EnvName::RunnerForward);
        let mut rng = seeded_rng(3);
        let mut replay = ReplayBuffer::new(10_000);
        let ds = collect_dataset(&env, DatasetSource::RandomRollouts, 20, 50, &mut rng).unwrap();
        for t in ds.transitions() {
            replay.push(t.s.clone(), t.a.clone(), t.next.clone());
        }
        let cfg = ApproximatorConfig { epochs: 20, ..ApproximatorConfig::density_desk() };
        let head = MixtureDensityHead::default();
        let pol = train_inverse_policy(&replay, &Scripted::Constant(0.4), &env, PolicyInput::Observation, 1000, &cfg, head, &mut rng).unwrap();
        let n = 2000;
        let mut mean = 0.0;
        for _ in 0..n {
            let a = pol.sample(&[0.0, 0.3], &mut rng)[0];
            assert!((-1.0..=1.0).contains(&a));
            mean += a / n as f64;
        }
        assert!((mean - 0.4).abs() < 2.0 * head.fixed_variance.sqrt(), "{mean}");
    }

    #[test]
    fn backward_step_is_reproducible() {
        let (env, inv) = runner_models(2);
        let mut replay = ReplayBuffer::new(100);
        replay.push(vec![0.0, 0.1], vec![0.0], vec![0.0, 0.1]);
        let cfg = ApproximatorConfig { epochs: 2, ..ApproximatorConfig::density_desk() };
        let pol = train_inverse_policy(&replay, &Scripted::Random, &env, PolicyInput::Observation, 50, &cfg, MixtureDensityHead::default(), &mut seeded_rng(0)).unwrap();
        let a = backward_step(&inv, &pol, &[0.0, 0.5], &mut seeded_rng(9));
        let b = backward_step(&inv, &pol, &[0.0, 0.5], &mut seeded_rng(9));
        assert_eq!(a, b);
    }
}
