//! Variational autoencoder used as a state feature learner.
//!
//! Inference-mode features are the posterior mean of the encoder.

use ndarray::{concatenate, s, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::config::{clip_grads, run_epochs, ApproximatorConfig};
use super::gradcheck::Differentiable;
use super::mlp::{Mlp, MlpGrads};
use super::normalize::Normalizer;
use super::optim::Optimizer;
use crate::error::{Error, Result};
use crate::util::{seeded_rng, SimRng};

/// Posterior log-variances are clamped to this range; beyond it the exponential
/// overflows within a few steps on heavy-tailed inputs.
const LOG_VAR_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDecoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub kl_weight: f64,
    pub input_norm: Normalizer,
    /// Reconstruction plus weighted KL term over the training set (noise-free).
    pub final_objective: f64,
    /// Reconstruction MSE of the posterior mean, in normalized units.
    pub final_recon: f64,
}

struct Pass {
    objective: f64,
    enc: MlpGrads,
    dec: MlpGrads,
}

impl EncoderDecoder {
    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Posterior mean of the latent code.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let out = self.encoder.predict_one(&self.input_norm.apply_one(x));
        out[..self.latent_dim].to_vec()
    }

    pub fn encode_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        let out = self.encoder.forward(&self.input_norm.apply(x));
        out.slice(s![.., ..self.latent_dim]).to_owned()
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.input_norm.invert_one(&self.decoder.predict_one(z))
    }

    /// Decoded posterior mean, in input units.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(x))
    }

    /// Reconstruction MSE of the posterior mean on normalized inputs.
    pub fn recon_error(&self, x: &Array2<f64>) -> f64 {
        let xn = self.input_norm.apply(x);
        let z = self.encoder.forward(&xn).slice(s![.., ..self.latent_dim]).to_owned();
        let diff = self.decoder.forward(&z) - &xn;
        diff.mapv(|d| d * d).mean().unwrap_or(f64::NAN)
    }

    fn pass(&self, xn: &Array2<f64>, eps: &Array2<f64>) -> Pass {
        let l = self.latent_dim;
        let b = xn.nrows() as f64;
        let c = self.kl_weight;
        let enc_cache = self.encoder.forward_cached(xn);
        let mu = enc_cache.output.slice(s![.., ..l]).to_owned();
        let raw_lv = enc_cache.output.slice(s![.., l..]).to_owned();
        let lv = raw_lv.mapv(|v| v.clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND));
        let sd = lv.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&sd * eps);
        let dec_cache = self.decoder.forward_cached(&z);
        let diff = &dec_cache.output - xn;
        let count = diff.len() as f64;
        let recon = diff.mapv(|d| d * d).sum() / count;
        let kl = ndarray::Zip::from(&mu)
            .and(&lv)
            .fold(0.0, |acc, m, v| acc + 0.5 * (m * m + v.exp() - v - 1.0))
            / b;
        let (dec, dz) = self.decoder.backward(&dec_cache, &(diff * (2.0 / count)));
        let dmu = &dz + &(&mu * (c / b));
        let mut dlv = &dz * eps * &sd * 0.5 + lv.mapv(|v| c * 0.5 * (v.exp() - 1.0) / b);
        ndarray::Zip::from(&mut dlv).and(&raw_lv).for_each(|g, v| {
            if v.abs() > LOG_VAR_BOUND {
                *g = 0.0;
            }
        });
        let grad_out = concatenate![Axis(1), dmu, dlv];
        let (enc, _) = self.encoder.backward(&enc_cache, &grad_out);
        Pass {
            objective: recon + c * kl,
            enc,
            dec,
        }
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut SimRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Trains an autoencoder with reconstruction loss plus `kl_weight` times the
/// KL divergence to a standard normal prior.
pub fn train_encoder(data: &Array2<f64>, cfg: &ApproximatorConfig, latent_dim: usize, kl_weight: f64) -> Result<EncoderDecoder> {
    cfg.validate()?;
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::arg("encoder dataset is empty"));
    }
    if latent_dim == 0 || !(kl_weight >= 0.0) {
        return Err(Error::Config("latent_dim must be positive and kl_weight non-negative".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let dim = data.ncols();
    let input_norm = if cfg.normalize_inputs { Normalizer::fit(data)? } else { Normalizer::identity(dim) };
    let xn = input_norm.apply(data);
    let encoder = Mlp::new(&cfg.sizes(dim, 2 * latent_dim), cfg.activation, &mut rng)?;
    let mut dec_sizes = vec![latent_dim];
    dec_sizes.extend(cfg.layer_sizes.iter().rev());
    dec_sizes.push(dim);
    let decoder = Mlp::new(&dec_sizes, cfg.activation, &mut rng)?;
    let mut model = EncoderDecoder {
        encoder,
        decoder,
        latent_dim,
        kl_weight,
        input_norm,
        final_objective: f64::NAN,
        final_recon: f64::NAN,
    };
    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut dec_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    run_epochs(data.nrows(), cfg, &mut rng, |idx, rng| {
        let xb = xn.select(Axis(0), idx);
        let eps = standard_normal(idx.len(), latent_dim, rng);
        let mut pass = model.pass(&xb, &eps);
        clip_grads(&mut [&mut pass.enc, &mut pass.dec], cfg.max_grad_norm);
        enc_opt.step(&mut model.encoder, &pass.enc);
        dec_opt.step(&mut model.decoder, &pass.dec);
        Ok(pass.objective)
    })?;
    let zero = Array2::zeros((data.nrows(), latent_dim));
    model.final_objective = model.pass(&xn, &zero).objective;
    model.final_recon = model.recon_error(data);
    if !model.final_objective.is_finite() {
        return Err(Error::Numerical("encoder training produced a non-finite objective".into()));
    }
    Ok(model)
}

impl Differentiable for EncoderDecoder {
    /// Inputs and the reparameterization noise.
    type Probe = (Array2<f64>, Array2<f64>);

    fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params_flat();
        p.extend(self.decoder.params_flat());
        p
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.encoder.num_params();
        if p.len() != n + self.decoder.num_params() {
            return Err(Error::arg("parameter count mismatch"));
        }
        self.encoder.set_params_flat(&p[..n])?;
        self.decoder.set_params_flat(&p[n..])
    }

    fn loss_and_grad(&self, probe: &Self::Probe) -> (f64, Vec<f64>) {
        let pass = self.pass(&self.input_norm.apply(&probe.0), &probe.1);
        let mut g = pass.enc.flat();
        g.extend(pass.dec.flat());
        (pass.objective, g)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    fn line_data(n: usize) -> Array2<f64> {
        let mut rng = seeded_rng(0);
        let mut data = Array2::zeros((n, 2));
        for mut row in data.rows_mut() {
            let t = rng.random::<f64>() * 2.0 - 1.0;
            row[0] = t;
            row[1] = 0.5 * t + 0.1;
        }
        data
    }

    #[test]
    fn line_manifold_is_reconstructed() {
        let data = line_data(400);
        let cfg = ApproximatorConfig { epochs: 60, ..ApproximatorConfig::encoder_desk() };
        let m = train_encoder(&data, &cfg, 2, 0.001).unwrap();
        assert!(m.final_recon < 1e-2, "{}", m.final_recon);
    }

    #[test]
    fn removing_the_kl_penalty_does_not_hurt_reconstruction() {
        let data = line_data(300);
        let cfg = ApproximatorConfig { epochs: 30, ..ApproximatorConfig::encoder_desk() };
        let plain = train_encoder(&data, &cfg, 2, 0.0).unwrap();
        let reg = train_encoder(&data, &cfg, 2, 0.001).unwrap();
        assert!(plain.final_objective <= reg.final_objective, "{} vs {}", plain.final_objective, reg.final_objective);
    }

    #[test]
    fn encoding_is_deterministic() {
        let data = line_data(50);
        let cfg = ApproximatorConfig { epochs: 2, ..ApproximatorConfig::encoder_desk() };
        let m = train_encoder(&data, &cfg, 3, 0.001).unwrap();
        assert_eq!(m.encode(&[0.2, 0.2]), m.encode(&[0.2, 0.2]));
        assert_eq!(m.encode(&[0.2, 0.2]).len(), 3);
    }
}
