//! Finite-difference verification of analytic parameter gradients.

use rand::seq::index::sample;

use crate::error::Result;
use crate::util::seeded_rng;

const FD_STEP: f64 = 1e-5;
const PROBED_PARAMS: usize = 32;
const DENOM_FLOOR: f64 = 1e-6;

/// A model whose training loss at a probe can be differentiated.
pub trait Differentiable {
    type Probe;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]) -> Result<()>;
    fn loss_and_grad(&self, probe: &Self::Probe) -> (f64, Vec<f64>);
}

/// Largest relative error between analytic gradients and central differences
/// over a random subset of 32 parameters (all parameters if fewer).
pub fn check_gradients<M: Differentiable>(model: &mut M, probe: &M::Probe, seed: u64) -> Result<f64> {
    let base = model.params();
    let (_, analytic) = model.loss_and_grad(probe);
    let mut rng = seeded_rng(seed);
    let chosen = sample(&mut rng, base.len(), PROBED_PARAMS.min(base.len()));
    let mut worst: f64 = 0.0;
    let mut p = base.clone();
    for i in chosen {
        p[i] = base[i] + FD_STEP;
        model.set_params(&p)?;
        let plus = model.loss_and_grad(probe).0;
        p[i] = base[i] - FD_STEP;
        model.set_params(&p)?;
        let minus = model.loss_and_grad(probe).0;
        p[i] = base[i];
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(DENOM_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    model.set_params(&base)?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::nn::{Activation, EncoderDecoder, Mlp, MixtureDensity, MixtureDensityHead, Normalizer, Regressor};

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded_rng(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn fresh_regressor_gradients_match() {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = Mlp::new(&[3, 16, 16, 2], act, &mut seeded_rng(1)).unwrap();
            let mut m = Regressor::untrained(net);
            let probe = (random(8, 3, 2), random(8, 2, 3));
            assert!(check_gradients(&mut m, &probe, 4).unwrap() < 1e-4);
        }
    }

    #[test]
    fn zero_linear_network_matches_closed_form() {
        // y = W x + b with W = 0, b = 0: dL/dW = -2/n Σ y xᵀ, dL/db = -2/n Σ y
        let mut m = Regressor::untrained(Mlp::zeros(&[2, 1], Activation::Identity).unwrap());
        let x = ndarray::array![[1.0, 2.0], [-1.0, 0.5]];
        let y = ndarray::array![[3.0], [1.0]];
        let (loss, g) = m.loss_and_grad(&(x.clone(), y.clone()));
        assert!((loss - 5.0).abs() < 1e-12);
        let expected = [-(3.0 * 1.0 - 1.0), -(3.0 * 2.0 + 1.0 * 0.5), -(3.0 + 1.0)];
        for (a, e) in g.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{g:?}");
        }
        assert!(check_gradients(&mut m, &(x, y), 0).unwrap() < 1e-6);
    }

    #[test]
    fn density_gradients_match() {
        let head = MixtureDensityHead::default();
        let net = Mlp::new(&[2, 12, 12, head.components * 2], Activation::Tanh, &mut seeded_rng(5)).unwrap();
        let mut m = MixtureDensity::untrained(net, head, 1).unwrap();
        let probe = (random(6, 2, 6), random(6, 1, 7));
        assert!(check_gradients(&mut m, &probe, 8).unwrap() < 1e-3);
    }

    #[test]
    fn encoder_gradients_match() {
        let mut rng = seeded_rng(9);
        let mut m = EncoderDecoder {
            encoder: Mlp::new(&[3, 10, 4], Activation::Tanh, &mut rng).unwrap(),
            decoder: Mlp::new(&[2, 10, 3], Activation::Tanh, &mut rng).unwrap(),
            latent_dim: 2,
            kl_weight: 0.1,
            input_norm: Normalizer::identity(3),
            final_objective: f64::NAN,
            final_recon: f64::NAN,
        };
        let probe = (random(5, 3, 10), random(5, 2, 11));
        assert!(check_gradients(&mut m, &probe, 12).unwrap() < 1e-3);
    }

    #[test]
    fn params_are_restored() {
        let net = Mlp::new(&[2, 4, 1], Activation::Tanh, &mut seeded_rng(1)).unwrap();
        let mut m = Regressor::untrained(net);
        let before = m.params();
        check_gradients(&mut m, &(random(3, 2, 1), random(3, 1, 2)), 3).unwrap();
        assert_eq!(before, m.params());
    }
}
