//! Mixture density network with fixed, isotropic component variance.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{clip_grads, run_epochs, ApproximatorConfig};
use super::gradcheck::Differentiable;
use super::mlp::{Mlp, MlpGrads};
use super::normalize::Normalizer;
use super::optim::Optimizer;
use super::regressor::check_pairs;
use crate::error::{Error, Result};
use crate::util::{log_sum_exp, sample_index, seeded_rng, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensityHead {
    pub components: usize,
    /// Variance of every component along every dimension.
    pub fixed_variance: f64,
}

impl Default for MixtureDensityHead {
    fn default() -> Self {
        Self {
            components: 5,
            fixed_variance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensity {
    pub net: Mlp,
    pub head: MixtureDensityHead,
    pub target_dim: usize,
    pub input_norm: Normalizer,
    /// Mean negative log-likelihood over the training set.
    pub final_loss: f64,
}

impl MixtureDensity {
    pub fn untrained(net: Mlp, head: MixtureDensityHead, target_dim: usize) -> Result<Self> {
        if net.output_dim() != head.components * (1 + target_dim) {
            return Err(Error::arg("network output does not match the mixture head"));
        }
        let dim = net.input_dim();
        Ok(Self {
            net,
            head,
            target_dim,
            input_norm: Normalizer::identity(dim),
            final_loss: f64::NAN,
        })
    }

    /// Mixture weights and component means for one input.
    pub fn mixture(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let out = self.net.predict_one(&self.input_norm.apply_one(x));
        let k = self.head.components;
        let weights = softmax(&out[..k]);
        let means = out[k..].chunks(self.target_dim).map(<[f64]>::to_vec).collect();
        (weights, means)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let (weights, means) = self.mixture(x);
        let k = sample_index(&weights, rng);
        let sd = self.head.fixed_variance.sqrt();
        means[k]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }

    pub fn log_prob(&self, x: &[f64], y: &[f64]) -> f64 {
        let (weights, means) = self.mixture(x);
        let var = self.head.fixed_variance;
        let norm = -0.5 * self.target_dim as f64 * (2.0 * std::f64::consts::PI * var).ln();
        let terms: Vec<f64> = weights
            .iter()
            .zip(&means)
            .map(|(w, m)| {
                let sq: f64 = m.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                w.ln() + norm - sq / (2.0 * var)
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Mean negative log-likelihood and its gradient for normalized inputs.
fn nll_grads(net: &Mlp, head: &MixtureDensityHead, dim: usize, x: &Array2<f64>, y: &Array2<f64>) -> (f64, MlpGrads) {
    let cache = net.forward_cached(x);
    let k = head.components;
    let var = head.fixed_variance;
    let norm = -0.5 * dim as f64 * (2.0 * std::f64::consts::PI * var).ln();
    let b = x.nrows() as f64;
    let mut grad_out = Array2::zeros(cache.output.raw_dim());
    let mut loss = 0.0;
    for (i, row) in cache.output.axis_iter(Axis(0)).enumerate() {
        let row = row.to_vec();
        let logits = &row[..k];
        let lse = log_sum_exp(logits);
        let target = y.row(i);
        let mut a = vec![0.0; k];
        for c in 0..k {
            let mu = &row[k + c * dim..k + (c + 1) * dim];
            let sq: f64 = mu.iter().zip(target.iter()).map(|(m, t)| (m - t).powi(2)).sum();
            a[c] = logits[c] - lse + norm - sq / (2.0 * var);
        }
        let total = log_sum_exp(&a);
        loss -= total;
        for c in 0..k {
            let resp = (a[c] - total).exp();
            let pi = (logits[c] - lse).exp();
            grad_out[[i, c]] = (pi - resp) / b;
            for d in 0..dim {
                grad_out[[i, k + c * dim + d]] = resp * (row[k + c * dim + d] - target[d]) / var / b;
            }
        }
    }
    let (grads, _) = net.backward(&cache, &grad_out);
    (loss / b, grads)
}

/// Fits a conditional mixture density `p(y | x)` by maximum likelihood.
pub fn train_density_model(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &ApproximatorConfig,
    head: MixtureDensityHead,
) -> Result<MixtureDensity> {
    cfg.validate()?;
    check_pairs(x, y)?;
    if head.components == 0 || !(head.fixed_variance > 0.0) {
        return Err(Error::Config("mixture head needs components > 0 and a positive variance".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let dim = y.ncols();
    let input_norm = if cfg.normalize_inputs { Normalizer::fit(x)? } else { Normalizer::identity(x.ncols()) };
    let xn = input_norm.apply(x);
    let mut net = Mlp::new(&cfg.sizes(x.ncols(), head.components * (1 + dim)), cfg.activation, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    run_epochs(x.nrows(), cfg, &mut rng, |idx, rng| {
        let mut xb = xn.select(Axis(0), idx);
        let mut yb = y.select(Axis(0), idx);
        super::regressor::add_noise(&mut xb, cfg.input_noise_std, rng);
        super::regressor::add_noise(&mut yb, cfg.target_noise_std, rng);
        let (loss, mut grads) = nll_grads(&net, &head, dim, &xb, &yb);
        clip_grads(&mut [&mut grads], cfg.max_grad_norm);
        opt.step(&mut net, &grads);
        Ok(loss)
    })?;
    let (final_loss, _) = nll_grads(&net, &head, dim, &xn, y);
    if !final_loss.is_finite() {
        return Err(Error::Numerical("density model training produced a non-finite loss".into()));
    }
    Ok(MixtureDensity {
        net,
        head,
        target_dim: dim,
        input_norm,
        final_loss,
    })
}

impl Differentiable for MixtureDensity {
    type Probe = (Array2<f64>, Array2<f64>);

    fn params(&self) -> Vec<f64> {
        self.net.params_flat()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        self.net.set_params_flat(p)
    }

    fn loss_and_grad(&self, probe: &Self::Probe) -> (f64, Vec<f64>) {
        let xn = self.input_norm.apply(&probe.0);
        let (loss, grads) = nll_grads(&self.net, &self.head, self.target_dim, &xn, &probe.1);
        (loss, grads.flat())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;

    use super::*;

    fn cfg() -> ApproximatorConfig {
        ApproximatorConfig {
            epochs: 40,
            ..ApproximatorConfig::density_desk()
        }
    }

    #[test]
    fn deterministic_target_is_centered() {
        let x = Array2::from_shape_fn((200, 1), |(i, _)| i as f64 / 200.0);
        let y = Array2::from_elem((200, 1), 0.7);
        let m = train_density_model(&x, &y, &cfg(), MixtureDensityHead::default()).unwrap();
        let mut rng = seeded_rng(3);
        let n = 2000;
        let mean = (0..n).map(|_| m.sample(&[0.5], &mut rng)[0]).sum::<f64>() / n as f64;
        let sigma = m.head.fixed_variance.sqrt();
        assert!((mean - 0.7).abs() < 2.0 * sigma, "mean {mean}");
    }

    #[test]
    fn bimodal_target_keeps_both_modes() {
        let mut rng = seeded_rng(1);
        let x = Array2::from_shape_fn((400, 1), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((400, 1), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let m = train_density_model(&x, &y, &cfg(), MixtureDensityHead::default()).unwrap();
        let samples: Vec<f64> = (0..1000).map(|_| m.sample(&[0.5], &mut rng)[0]).collect();
        let pos = samples.iter().filter(|v| **v > 0.0).count() as f64 / 1000.0;
        assert!((0.2..=0.8).contains(&pos), "positive mass {pos}");
    }

    #[test]
    fn log_prob_integrates_to_one() {
        let head = MixtureDensityHead::default();
        let net = Mlp::new(&[1, 8, head.components * 2], super::super::Activation::Tanh, &mut seeded_rng(2)).unwrap();
        let m = MixtureDensity::untrained(net, head, 1).unwrap();
        let h = 1e-3;
        let total: f64 = (0..20_000).map(|i| m.log_prob(&[0.3], &[-10.0 + i as f64 * h]).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-2, "{total}");
    }
}
