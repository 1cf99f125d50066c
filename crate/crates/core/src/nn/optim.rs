//! First-order optimizers over [`Mlp`] parameters.

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    /// Minibatch gradient descent with heavy-ball momentum.
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Momentum { momentum: 0.9 }
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Option<MlpGrads>,
    second: Option<MlpGrads>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first: None,
            second: None,
            steps: 0,
        }
    }

    /// Applies one descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.steps += 1;
        let zeros = || MlpGrads {
            weights: grads.weights.iter().map(|w| w.mapv(|_| 0.0)).collect(),
            biases: grads.biases.iter().map(|b| b.mapv(|_| 0.0)).collect(),
        };
        match self.kind {
            OptimizerKind::Momentum { momentum } => {
                let vel = self.first.get_or_insert_with(zeros);
                let lr = self.lr;
                for i in 0..net.weights.len() {
                    vel.weights[i].zip_mut_with(&grads.weights[i], |v, g| *v = momentum * *v + g);
                    vel.biases[i].zip_mut_with(&grads.biases[i], |v, g| *v = momentum * *v + g);
                    net.weights[i].zip_mut_with(&vel.weights[i], |p, v| *p -= lr * v);
                    net.biases[i].zip_mut_with(&vel.biases[i], |p, v| *p -= lr * v);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let m = self.first.get_or_insert_with(zeros);
                let v = self.second.get_or_insert_with(zeros);
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                let lr = self.lr;
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for i in 0..net.weights.len() {
                    ndarray::Zip::from(&mut net.weights[i])
                        .and(&mut m.weights[i])
                        .and(&mut v.weights[i])
                        .and(&grads.weights[i])
                        .for_each(|p, m, v, g| update(p, m, v, *g));
                    ndarray::Zip::from(&mut net.biases[i])
                        .and(&mut m.biases[i])
                        .and(&mut v.biases[i])
                        .and(&grads.biases[i])
                        .for_each(|p, m, v, g| update(p, m, v, *g));
                }
            }
        }
    }
}
