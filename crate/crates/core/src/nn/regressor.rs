//! Mean-squared-error regression.

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Normal};

use super::config::{clip_grads, run_epochs, ApproximatorConfig};
use super::gradcheck::Differentiable;
use super::mlp::Mlp;
use super::normalize::Normalizer;
use super::optim::Optimizer;
use crate::error::{Error, Result};
use crate::util::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub net: Mlp,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    /// Mean squared error over the training set, in target units.
    pub final_loss: f64,
}

impl Regressor {
    pub fn untrained(net: Mlp) -> Self {
        let (i, o) = (net.input_dim(), net.output_dim());
        Self {
            net,
            input_norm: Normalizer::identity(i),
            target_norm: Normalizer::identity(o),
            final_loss: f64::NAN,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        self.target_norm.invert(&self.net.forward(&self.input_norm.apply(x)))
    }

    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        self.target_norm.invert_one(&self.net.predict_one(&self.input_norm.apply_one(x)))
    }

    /// MSE in target units.
    pub fn mse(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let diff = self.predict(x) - y;
        diff.mapv(|d| d * d).mean().unwrap_or(f64::NAN)
    }
}

pub(crate) fn check_pairs(x: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::arg("dataset is empty"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::arg(format!("{} inputs but {} targets", x.nrows(), y.nrows())));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::arg("inputs and targets need at least one dimension"));
    }
    Ok(())
}

pub(crate) fn add_noise(m: &mut Array2<f64>, std: f64, rng: &mut crate::util::SimRng) {
    if std > 0.0 {
        let normal = Normal::new(0.0, std).expect("non-negative std");
        m.mapv_inplace(|v| v + normal.sample(rng));
    }
}

/// Trains an MSE regressor by minibatch gradient descent.
pub fn train_regressor(x: &Array2<f64>, y: &Array2<f64>, cfg: &ApproximatorConfig) -> Result<Regressor> {
    cfg.validate()?;
    check_pairs(x, y)?;
    let mut rng = seeded_rng(cfg.seed);
    let input_norm = if cfg.normalize_inputs { Normalizer::fit(x)? } else { Normalizer::identity(x.ncols()) };
    let target_norm = if cfg.normalize_targets { Normalizer::fit(y)? } else { Normalizer::identity(y.ncols()) };
    let xn = input_norm.apply(x);
    let yn = target_norm.apply(y);
    // noise is specified in raw units; scale it per dimension into normalized units
    let in_noise: Vec<f64> = input_norm.std.iter().map(|s| cfg.input_noise_std / s).collect();
    let out_noise: Vec<f64> = target_norm.std.iter().map(|s| cfg.target_noise_std / s).collect();
    let mut net = Mlp::new(&cfg.sizes(x.ncols(), y.ncols()), cfg.activation, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    run_epochs(x.nrows(), cfg, &mut rng, |idx, rng| {
        let mut xb = xn.select(Axis(0), idx);
        let mut yb = yn.select(Axis(0), idx);
        if cfg.input_noise_std > 0.0 {
            add_scaled_noise(&mut xb, &in_noise, rng);
        }
        if cfg.target_noise_std > 0.0 {
            add_scaled_noise(&mut yb, &out_noise, rng);
        }
        let (loss, mut grads) = mse_grads(&net, &xb, &yb);
        clip_grads(&mut [&mut grads], cfg.max_grad_norm);
        opt.step(&mut net, &grads);
        Ok(loss)
    })?;
    let mut model = Regressor {
        net,
        input_norm,
        target_norm,
        final_loss: f64::NAN,
    };
    model.final_loss = model.mse(x, y);
    if !model.final_loss.is_finite() {
        return Err(Error::Numerical("regressor training produced a non-finite loss".into()));
    }
    Ok(model)
}

fn add_scaled_noise(m: &mut Array2<f64>, stds: &[f64], rng: &mut crate::util::SimRng) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for mut row in m.rows_mut() {
        for (v, s) in row.iter_mut().zip(stds) {
            *v += s * normal.sample(rng);
        }
    }
}

fn mse_grads(net: &Mlp, x: &Array2<f64>, y: &Array2<f64>) -> (f64, super::mlp::MlpGrads) {
    let cache = net.forward_cached(x);
    let diff = &cache.output - y;
    let count = diff.len() as f64;
    let loss = diff.mapv(|d| d * d).sum() / count;
    let grad_out = diff * (2.0 / count);
    let (grads, _) = net.backward(&cache, &grad_out);
    (loss, grads)
}

impl Differentiable for Regressor {
    type Probe = (Array2<f64>, Array2<f64>);

    fn params(&self) -> Vec<f64> {
        self.net.params_flat()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        self.net.set_params_flat(p)
    }

    fn loss_and_grad(&self, probe: &Self::Probe) -> (f64, Vec<f64>) {
        let xb = self.input_norm.apply(&probe.0);
        let yb = self.target_norm.apply(&probe.1);
        let (loss, grads) = mse_grads(&self.net, &xb, &yb);
        (loss, grads.flat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_dataset_is_fit_exactly() {
        let x = Array2::from_elem((20, 2), 0.5);
        let y = Array2::from_elem((20, 1), -1.5);
        let cfg = ApproximatorConfig {
            epochs: 20,
            ..ApproximatorConfig::regressor_desk()
        };
        let m = train_regressor(&x, &y, &cfg).unwrap();
        assert!((m.predict_one(&[0.5, 0.5])[0] + 1.5).abs() < 1e-3);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = Array2::zeros((3, 1));
        let y = Array2::zeros((4, 1));
        assert!(matches!(
            train_regressor(&x, &y, &ApproximatorConfig::regressor_desk()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn linear_target_generalizes() {
        let x = Array2::from_shape_fn((256, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 255.0);
        let y = x.mapv(|v| 2.0 * v);
        let m = train_regressor(&x, &y, &ApproximatorConfig::regressor_desk()).unwrap();
        let held = Array2::from_shape_fn((50, 1), |(i, _)| -0.99 + 1.98 * i as f64 / 49.0 + 0.001);
        assert!(m.mse(&held, &held.mapv(|v| 2.0 * v)) < 1e-3);
    }

    #[test]
    fn same_seed_same_predictions() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i * (j + 1)) as f64 / 40.0);
        let y = x.map_axis(Axis(1), |r| r.sum()).insert_axis(Axis(1));
        let cfg = ApproximatorConfig { epochs: 5, ..ApproximatorConfig::regressor_desk() };
        let a = train_regressor(&x, &y, &cfg).unwrap();
        let b = train_regressor(&x, &y, &cfg).unwrap();
        assert_eq!(a.predict(&x), b.predict(&x));
    }

    #[test]
    fn input_normalization_removes_affine_scaling() {
        let x = Array2::from_shape_fn((64, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let y = x.map_axis(Axis(1), |r| r[0] - r[1]).insert_axis(Axis(1));
        let cfg = ApproximatorConfig { epochs: 10, ..ApproximatorConfig::regressor_desk() };
        let a = train_regressor(&x, &y, &cfg).unwrap();
        let b = train_regressor(&x.mapv(|v| 100.0 * v - 3.0), &y, &cfg).unwrap();
        assert!((a.final_loss - b.final_loss).abs() < 1e-6);
    }
}
