//! Hand-written controllers used for datasets, oracles and baselines.

use rand::Rng;

use super::env::{ContinuousEnv, EnvName};

/// A state-feedback controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scripted {
    /// Uniform random actions within the bounds.
    Random,
    /// Linear state feedback that keeps the pendulum upright and centered.
    Balancer,
    /// Constant action on every dimension.
    Constant(f64),
}

/// Pendulum feedback gains on (x, ẋ, angle, angular velocity).
const BALANCER_GAINS: [f64; 4] = [0.1, 0.25, 3.0, 0.5];

impl Scripted {
    pub fn act<R: Rng + ?Sized>(&self, env: &ContinuousEnv, s: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            Scripted::Random => (0..env.action_dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            Scripted::Balancer => {
                debug_assert_eq!(env.name(), EnvName::Pendulum);
                let u: f64 = BALANCER_GAINS.iter().zip(s).map(|(k, x)| k * x).sum();
                vec![u.clamp(-1.0, 1.0)]
            }
            Scripted::Constant(c) => vec![*c; env.action_dim()],
        }
    }
}
