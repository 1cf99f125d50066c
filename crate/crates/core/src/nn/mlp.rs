//! Batched feed-forward network with manual backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Hidden layers use `activation`; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    pub(crate) activation: Activation,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Layer sizes include input and output, e.g. `[4, 64, 64, 2]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::arg(format!("invalid layer sizes {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = i + 2 == sizes.len();
            let w = if activation == Activation::Relu && !last {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(rng))
            } else {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let uni = Uniform::new(-limit, limit).expect("valid range");
                Array2::from_shape_simple_fn((fan_in, fan_out), || uni.sample(rng))
            };
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::arg(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            weights: sizes.windows(2).map(|p| Array2::zeros((p[0], p[1]))).collect(),
            biases: sizes.windows(2).map(|p| Array1::zeros(p[1])).collect(),
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            if i < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        h
    }

    /// Forward pass for a single input without allocating matrices.
    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = b.to_vec();
            let cols = w.ncols();
            let flat = w.as_slice().expect("weights are contiguous");
            for (xi, row) in h.iter().zip(flat.chunks_exact(cols)) {
                if *xi == 0.0 {
                    continue;
                }
                for (o, wij) in out.iter_mut().zip(row) {
                    *o += xi * wij;
                }
            }
            if i < last {
                let act = self.activation;
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            h = out;
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            inputs.push(h);
            if i < last {
                let act = self.activation;
                h = z.mapv(|v| act.apply(v));
                pre.push(z);
            } else {
                h = z;
            }
        }
        ForwardCache { inputs, pre, output: h }
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut delta = grad_out.clone();
        for i in (0..n).rev() {
            gw[i] = cache.inputs[i].t().dot(&delta);
            gb[i] = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&self.weights[i].t());
            if i > 0 {
                let act = self.activation;
                ndarray::Zip::from(&mut back)
                    .and(&cache.pre[i - 1])
                    .and(&cache.inputs[i])
                    .for_each(|g, &z, &y| *g *= act.derivative(z, y));
            }
            delta = back;
        }
        (MlpGrads { weights: gw, biases: gb }, delta)
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::arg(format!("expected {} parameters, got {}", self.num_params(), params.len())));
        }
        let mut it = params.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = *it.next().expect("length checked"));
            b.iter_mut().for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Polyak averaging toward `other`: `self ← (1 − tau) self + tau other`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.zip_mut_with(o, |a, b| *a += tau * (b - *a));
        }
        for (w, o) in self.biases.iter_mut().zip(&other.biases) {
            w.zip_mut_with(o, |a, b| *a += tau * (b - *a));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    #[test]
    fn predict_one_matches_batch_forward() {
        let mut rng = seeded_rng(1);
        let net = Mlp::new(&[3, 5, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -1.2, 0.8]).unwrap();
        let batch = net.forward(&x);
        let single = net.predict_one(&[0.3, -1.2, 0.8]);
        for (a, b) in batch.iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = seeded_rng(2);
        let net = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let mut other = Mlp::zeros(&[2, 3, 1], Activation::Relu).unwrap();
        other.set_params_flat(&net.params_flat()).unwrap();
        assert_eq!(net, other);
    }
}
