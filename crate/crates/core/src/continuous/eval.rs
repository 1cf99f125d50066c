//! Monte-Carlo evaluation on the true reward.

use serde::{Deserialize, Serialize};

use super::env::ContinuousEnv;
use super::Controller;
use crate::error::{Error, Result};
use crate::util::{mean_and_stderr, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean: f64,
    pub stderr: f64,
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
}

/// Runs `episodes` full episodes from the initial-state distribution.
pub fn evaluate_policy<C: Controller + ?Sized>(env: &ContinuousEnv, policy: &C, episodes: usize, rng: &mut SimRng) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::arg("episodes must be at least 1"));
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (ret, len) = run_episode(env, policy, rng, |_, _| {});
        returns.push(ret);
        lengths.push(len);
    }
    let (mean, stderr) = mean_and_stderr(&returns);
    Ok(EvalReport {
        mean,
        stderr,
        returns,
        lengths,
    })
}

/// Plays one episode, calling `visit(t, state)` on every state including the
/// first. Returns the true return and the episode length.
pub fn run_episode<C: Controller + ?Sized>(
    env: &ContinuousEnv,
    policy: &C,
    rng: &mut SimRng,
    mut visit: impl FnMut(usize, &[f64]),
) -> (f64, usize) {
    let mut s = env.sample_initial(rng);
    visit(0, &s);
    let mut ret = 0.0;
    for t in 0..env.episode_len() {
        let a = policy.act(env, &s, rng);
        let step = env.transition(&s, &a);
        ret += step.reward;
        s = step.state;
        visit(t + 1, &s);
        if step.terminated {
            return (ret, t + 1);
        }
    }
    (ret, env.episode_len())
}
