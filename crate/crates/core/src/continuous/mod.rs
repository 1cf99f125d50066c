//! Built-in continuous-control environments, scripted controllers and the
//! maximum-entropy policy optimizer.

mod env;
mod eval;
mod scripted;
mod softq;

pub use env::{make_env, ContinuousEnv, EnvConstants, EnvName, HopperConstants, PendulumConstants, RunnerConstants, Step};
pub use eval::{evaluate_policy, run_episode, EvalReport};
pub use scripted::Scripted;
pub use softq::{optimize_policy, optimize_policy_from, ActionGrid, Greedy, MaxEntPolicy, RewardFn, SoftQConfig, StateReward};

use crate::util::SimRng;

/// Anything that picks actions for a continuous environment.
pub trait Controller {
    fn act(&self, env: &ContinuousEnv, s: &[f64], rng: &mut SimRng) -> Vec<f64>;
}

impl Controller for Scripted {
    fn act(&self, env: &ContinuousEnv, s: &[f64], rng: &mut SimRng) -> Vec<f64> {
        Scripted::act(self, env, s, rng)
    }
}
