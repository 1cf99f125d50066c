//! Maximum-entropy policy optimization by soft Q-learning over a discretized
//! action grid.
//!
//! Every visited state is stored with the simulator's outcome for all grid
//! actions, so each update regresses Q(s, ·) on the full row of soft Bellman
//! targets `r(s'_j) + γ V̄(s'_j)` with `V̄ = τ log Σ exp(Q̄ / τ)` from a
//! periodically copied target network.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::ContinuousEnv;
use super::Controller;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpGrads, Optimizer, OptimizerKind};
use crate::util::{sample_index, softmax, SimRng};

/// Cartesian grid of actions, `points` values per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    actions: Vec<Vec<f64>>,
}

impl ActionGrid {
    pub fn new(bounds: &[(f64, f64)], points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config("action grid needs at least 2 points per dimension".into()));
        }
        let mut actions = vec![Vec::new()];
        for &(lo, hi) in bounds {
            let axis: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
            actions = actions
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut a = prefix.clone();
                        a.push(v);
                        a
                    })
                })
                .collect();
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i]
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
}

/// Reward evaluated on the state reached by a transition.
pub trait StateReward {
    fn rewards(&self, env: &ContinuousEnv, next_states: &[Vec<f64>]) -> Vec<f64>;
}

/// Which reward the optimizer maximizes.
#[derive(Clone, Copy)]
pub enum RewardFn<'a> {
    /// The environment's own reward and termination.
    True,
    /// A state reward; episodes still end on environment termination.
    States(&'a dyn StateReward),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftQConfig {
    /// Environment steps.
    pub budget: usize,
    pub grid_points: usize,
    pub temperature: f64,
    pub discount: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Environment steps between target-network copies.
    pub target_period: usize,
    /// Steps collected before the first update.
    pub warmup: usize,
    /// Training episodes are cut after this many steps.
    pub train_episode_len: usize,
    pub capacity: usize,
}

impl Default for SoftQConfig {
    fn default() -> Self {
        Self {
            budget: 3000,
            grid_points: 9,
            temperature: 1.0,
            discount: 0.97,
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 32,
            target_period: 100,
            warmup: 100,
            train_episode_len: 50,
            capacity: 50_000,
        }
    }
}

impl SoftQConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config("temperature must be positive and discount in [0, 1)".into()));
        }
        if self.hidden.is_empty() || self.batch_size == 0 || self.target_period == 0 || self.train_episode_len == 0 {
            return Err(Error::Config("soft Q-learning sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Boltzmann policy `π(a|s) ∝ exp(Q(s, a) / τ)` over an action grid; uniform
/// when no Q-network has been trained.
#[derive(Debug, Clone)]
pub struct MaxEntPolicy {
    grid: ActionGrid,
    q: Option<Mlp>,
    temperature: f64,
}

impl MaxEntPolicy {
    pub fn uniform(grid: ActionGrid, temperature: f64) -> Self {
        Self {
            grid,
            q: None,
            temperature,
        }
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn q_network(&self) -> Option<&Mlp> {
        self.q.as_ref()
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        match &self.q {
            Some(q) => q.predict_one(obs),
            None => vec![0.0; self.grid.len()],
        }
    }

    pub fn probs(&self, obs: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = self.q_values(obs).iter().map(|q| q / self.temperature).collect();
        softmax(&scaled)
    }

    pub fn entropy(&self, obs: &[f64]) -> f64 {
        -self.probs(obs).iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> usize {
        sample_index(&self.probs(obs), rng)
    }

    /// Highest-Q grid action (lowest index on ties).
    pub fn greedy_index(&self, obs: &[f64]) -> usize {
        let q = self.q_values(obs);
        let mut best = 0;
        for (i, v) in q.iter().enumerate() {
            if *v > q[best] {
                best = i;
            }
        }
        best
    }

    /// This policy acting greedily.
    pub fn greedy(&self) -> Greedy<'_> {
        Greedy(self)
    }
}

impl Controller for MaxEntPolicy {
    fn act(&self, env: &ContinuousEnv, s: &[f64], rng: &mut SimRng) -> Vec<f64> {
        self.grid.action(self.sample_index(&env.observe(s), rng)).to_vec()
    }
}

/// Greedy view of a [`MaxEntPolicy`].
#[derive(Debug, Clone, Copy)]
pub struct Greedy<'a>(pub &'a MaxEntPolicy);

impl Controller for Greedy<'_> {
    fn act(&self, env: &ContinuousEnv, s: &[f64], _rng: &mut SimRng) -> Vec<f64> {
        self.0.grid.action(self.0.greedy_index(&env.observe(s))).to_vec()
    }
}

/// A visited state with the outcome of every grid action.
struct Sweep {
    obs: Vec<f64>,
    next_obs: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
}

fn sweep(env: &ContinuousEnv, grid: &ActionGrid, reward: RewardFn<'_>, s: &[f64]) -> (Sweep, Vec<Vec<f64>>) {
    let steps: Vec<_> = grid.actions().iter().map(|a| env.transition(s, a)).collect();
    let next: Vec<Vec<f64>> = steps.iter().map(|st| st.state.clone()).collect();
    let rewards = match reward {
        RewardFn::True => steps.iter().map(|st| st.reward).collect(),
        RewardFn::States(r) => r.rewards(env, &next),
    };
    let sw = Sweep {
        obs: env.observe(s),
        next_obs: next.iter().map(|n| env.observe(n)).collect(),
        rewards,
        terminal: steps.iter().map(|st| st.terminated).collect(),
    };
    (sw, next)
}

/// Trains a Boltzmann policy for `reward` with `cfg.budget` environment steps.
/// A zero budget returns the uniform policy.
pub fn optimize_policy(env: &ContinuousEnv, reward: RewardFn<'_>, cfg: &SoftQConfig, rng: &mut SimRng) -> Result<MaxEntPolicy> {
    optimize_policy_from(env, reward, cfg, None, rng)
}

/// Like [`optimize_policy`], continuing from `init`'s Q-network when given.
pub fn optimize_policy_from(
    env: &ContinuousEnv,
    reward: RewardFn<'_>,
    cfg: &SoftQConfig,
    init: Option<&MaxEntPolicy>,
    rng: &mut SimRng,
) -> Result<MaxEntPolicy> {
    cfg.validate()?;
    let grid = ActionGrid::new(&env.action_bounds(), cfg.grid_points)?;
    if let Some(p) = init {
        if p.grid != grid {
            return Err(Error::arg("warm-start policy uses a different action grid"));
        }
    }
    let mut policy = match init {
        Some(p) => p.clone(),
        None => MaxEntPolicy::uniform(grid.clone(), cfg.temperature),
    };
    if cfg.budget == 0 {
        return Ok(policy);
    }
    let k = grid.len();
    let mut q = match policy.q.take() {
        Some(q) => q,
        None => {
            let mut sizes = vec![env.obs_dim()];
            sizes.extend(&cfg.hidden);
            sizes.push(k);
            Mlp::new(&sizes, Activation::Relu, rng)?
        }
    };
    let mut target = q.clone();
    let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.learning_rate);
    let mut buffer: Vec<Sweep> = Vec::new();
    let mut next_slot = 0;
    let mut s = env.sample_initial(rng);
    let mut t = 0;
    for step in 0..cfg.budget {
        let (sw, next) = sweep(env, &grid, reward, &s);
        let qs = q.predict_one(&sw.obs);
        let scaled: Vec<f64> = qs.iter().map(|v| v / cfg.temperature).collect();
        let a = sample_index(&softmax(&scaled), rng);
        let done = sw.terminal[a];
        s = next[a].clone();
        if buffer.len() < cfg.capacity {
            buffer.push(sw);
        } else {
            buffer[next_slot] = sw;
            next_slot = (next_slot + 1) % cfg.capacity;
        }
        t += 1;
        if done || t >= cfg.train_episode_len {
            s = env.sample_initial(rng);
            t = 0;
        }
        if step + 1 >= cfg.warmup && buffer.len() >= cfg.batch_size.min(cfg.warmup.max(1)) {
            let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..buffer.len())).collect();
            let grads = td_grads(&q, &target, &buffer, &idx, cfg)?;
            opt.step(&mut q, &grads);
        }
        if (step + 1) % cfg.target_period == 0 {
            target = q.clone();
        }
    }
    policy.q = Some(q);
    Ok(policy)
}

fn td_grads(q: &Mlp, target: &Mlp, buffer: &[Sweep], idx: &[usize], cfg: &SoftQConfig) -> Result<MlpGrads> {
    let k = buffer[0].rewards.len();
    let obs_dim = buffer[0].obs.len();
    let b = idx.len();
    let mut x = Array2::zeros((b, obs_dim));
    let mut nx = Array2::zeros((b * k, obs_dim));
    for (r, &i) in idx.iter().enumerate() {
        x.row_mut(r).assign(&ArrayView1::from(&buffer[i].obs));
        for j in 0..k {
            nx.row_mut(r * k + j).assign(&ArrayView1::from(&buffer[i].next_obs[j]));
        }
    }
    let next_q = target.forward(&nx);
    let tau = cfg.temperature;
    let cache = q.forward_cached(&x);
    let mut grad = Array2::zeros((b, k));
    for (r, &i) in idx.iter().enumerate() {
        let sw = &buffer[i];
        for j in 0..k {
            let v = if sw.terminal[j] {
                0.0
            } else {
                let row = next_q.row(r * k + j);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + tau * row.iter().map(|v| ((v - max) / tau).exp()).sum::<f64>().ln()
            };
            let y = sw.rewards[j] + cfg.discount * v;
            let diff = cache.output[[r, j]] - y;
            if !diff.is_finite() {
                return Err(Error::Numerical("soft Q-learning produced a non-finite value".into()));
            }
            grad[[r, j]] = 2.0 * diff / (b * k) as f64;
        }
    }
    let (grads, _) = q.backward(&cache, &grad);
    Ok(grads)
}
