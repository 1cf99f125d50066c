//! Training configuration shared by the approximator families.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpGrads};
use super::optim::OptimizerKind;
use crate::error::{Error, Result};
use crate::util::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproximatorConfig {
    /// Hidden layer widths.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub normalize_inputs: bool,
    pub normalize_targets: bool,
    /// Std of zero-mean Gaussian noise added to inputs during training.
    pub input_noise_std: f64,
    /// Std of zero-mean Gaussian noise added to targets during training.
    pub target_noise_std: f64,
    /// Batch gradients with a larger global norm are rescaled to this norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for ApproximatorConfig {
    fn default() -> Self {
        Self::regressor_desk()
    }
}

impl ApproximatorConfig {
    pub fn regressor_desk() -> Self {
        Self {
            layer_sizes: vec![128, 128, 128],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            optimizer: OptimizerKind::default(),
            normalize_inputs: true,
            normalize_targets: true,
            input_noise_std: 0.0,
            target_noise_std: 0.0,
            max_grad_norm: None,
        }
    }

    pub fn density_desk() -> Self {
        Self {
            layer_sizes: vec![64, 64],
            normalize_targets: false,
            ..Self::regressor_desk()
        }
    }

    pub fn encoder_desk() -> Self {
        Self {
            layer_sizes: vec![128, 128],
            normalize_targets: false,
            max_grad_norm: Some(10.0),
            ..Self::regressor_desk()
        }
    }

    /// Inverse dynamics network: 5 layers of 1024 units.
    pub fn regressor_paper() -> Self {
        Self {
            layer_sizes: vec![1024; 5],
            batch_size: 500,
            input_noise_std: 0.001,
            target_noise_std: 0.001,
            ..Self::regressor_desk()
        }
    }

    /// Inverse policy network: 3 layers of 512 units.
    pub fn density_paper() -> Self {
        Self {
            layer_sizes: vec![512; 3],
            batch_size: 500,
            learning_rate: 1e-4,
            ..Self::density_desk()
        }
    }

    /// Autoencoder: 3 layers of 512 units.
    pub fn encoder_paper() -> Self {
        Self {
            layer_sizes: vec![512; 3],
            batch_size: 500,
            learning_rate: 1e-5,
            epochs: 100,
            ..Self::encoder_desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::Config("at least one non-empty hidden layer is required".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.input_noise_std < 0.0 || self.target_noise_std < 0.0 {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.layer_sizes);
        s.push(output);
        s
    }
}

/// Rescales `grads` jointly so their global norm is at most `max_norm`.
pub(crate) fn clip_grads(grads: &mut [&mut MlpGrads], max_norm: Option<f64>) {
    let Some(max_norm) = max_norm else { return };
    let sq: f64 = grads.iter().flat_map(|g| g.flat()).map(|x| x * x).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        grads.iter_mut().for_each(|g| g.scale(max_norm / norm));
    }
}

/// Runs `epochs` passes of shuffled minibatches, aborting on a non-finite loss.
/// Returns the mean batch loss of the last epoch.
pub(crate) fn run_epochs(
    n: usize,
    cfg: &ApproximatorConfig,
    rng: &mut SimRng,
    mut step: impl FnMut(&[usize], &mut SimRng) -> Result<f64>,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let loss = step(chunk, rng)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}, batch {b} (batch size {})",
                    chunk.len()
                )));
            }
            total += loss;
            batches += 1;
        }
        last = total / batches.max(1) as f64;
        log::trace!("epoch {epoch}: loss {last:.6e}");
    }
    Ok(last)
}
