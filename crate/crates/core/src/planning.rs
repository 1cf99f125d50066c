//! Maximum-entropy planning on tabular MDPs: soft value iteration, Boltzmann
//! policies, feature expectations and the per-trajectory MCEIRL gradient.
//!
//! Time indices run `0..=horizon`; the reward is collected on the current state
//! at every step including the final one, so `V_horizon(s) = θᵀφ(s)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{FeatureMap, RewardParams, TabularMdp};
use crate::util::{log_sum_exp, sample_index, softmax_into};

/// Soft Q-values `q[t][s * A + a]` for `t < horizon` and soft values `v[t][s]` for `t ≤ horizon`.
#[derive(Debug, Clone)]
pub struct QSchedule {
    pub num_states: usize,
    pub num_actions: usize,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl QSchedule {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.q[t][s * self.num_actions..(s + 1) * self.num_actions]
    }
}

/// Time-indexed action distributions `probs[t][s * A + a]`.
#[derive(Debug, Clone)]
pub struct PolicySchedule {
    pub num_states: usize,
    pub num_actions: usize,
    pub probs: Vec<Vec<f64>>,
}

impl PolicySchedule {
    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.probs[t][s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// The same per-state distribution at every time step.
    pub fn stationary(rows: Vec<f64>, num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![rows; horizon],
        }
    }

    /// Deterministic policy from an action choice per `(t, s)`.
    pub fn from_actions(choices: &[Vec<usize>], num_actions: usize) -> Self {
        let num_states = choices.first().map_or(0, Vec::len);
        let probs = choices
            .iter()
            .map(|row| {
                let mut p = vec![0.0; num_states * num_actions];
                for (s, a) in row.iter().enumerate() {
                    p[s * num_actions + a] = 1.0;
                }
                p
            })
            .collect();
        Self {
            num_states,
            num_actions,
            probs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Alternating states and actions; `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S = usize, A = usize> {
    pub states: Vec<S>,
    pub actions: Vec<A>,
    pub direction: Direction,
}

impl<S, A> Trajectory<S, A> {
    pub fn new(states: Vec<S>, actions: Vec<A>, direction: Direction) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::arg(format!(
                "trajectory has {} states and {} actions",
                states.len(),
                actions.len()
            )));
        }
        Ok(Self {
            states,
            actions,
            direction,
        })
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn first_state(&self) -> &S {
        &self.states[0]
    }

    pub fn last_state(&self) -> &S {
        &self.states[self.states.len() - 1]
    }
}

/// Expected feature counts `f[t][s * n + i]` for `t ≤ horizon`.
#[derive(Debug, Clone)]
pub struct FeatureExpectations {
    pub dim: usize,
    pub f: Vec<Vec<f64>>,
}

impl FeatureExpectations {
    #[inline]
    pub fn at(&self, t: usize, s: usize) -> &[f64] {
        &self.f[t][s * self.dim..(s + 1) * self.dim]
    }

    pub fn horizon(&self) -> usize {
        self.f.len() - 1
    }
}

/// Soft value iteration over the MDP's own horizon.
pub fn soft_value_iteration(mdp: &TabularMdp, features: &FeatureMap, theta: &RewardParams) -> Result<QSchedule> {
    soft_value_iteration_for(mdp, features, theta, mdp.horizon())
}

/// Soft value iteration over an explicit horizon.
pub fn soft_value_iteration_for(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    horizon: usize,
) -> Result<QSchedule> {
    check_features(mdp, features, theta)?;
    Ok(soft_value_iteration_rewards(mdp, &features.rewards(theta), horizon))
}

/// Soft value iteration for an arbitrary per-state reward vector.
pub fn soft_value_iteration_rewards(mdp: &TabularMdp, rewards: &[f64], horizon: usize) -> QSchedule {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![Vec::new(); horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    v[horizon] = rewards.to_vec();
    for t in (0..horizon).rev() {
        let next = &v[t + 1];
        let mut qt = vec![0.0; ns * na];
        let mut vt = vec![0.0; ns];
        for s in 0..ns {
            let row = &mut qt[s * na..(s + 1) * na];
            for (a, qa) in row.iter_mut().enumerate() {
                let cont: f64 = mdp.successors(s, a).iter().map(|&(n, p)| p * next[n]).sum();
                *qa = rewards[s] + cont;
            }
            vt[s] = log_sum_exp(row);
        }
        q[t] = qt;
        v[t] = vt;
    }
    QSchedule {
        num_states: ns,
        num_actions: na,
        q,
        v,
    }
}

/// `π_t(a|s) ∝ exp(Q_t(s, a))`.
pub fn boltzmann_policy(q: &QSchedule) -> PolicySchedule {
    let na = q.num_actions;
    let probs = q
        .q
        .iter()
        .map(|qt| {
            let mut pt = vec![0.0; qt.len()];
            for (src, dst) in qt.chunks(na).zip(pt.chunks_mut(na)) {
                softmax_into(src, dst);
            }
            pt
        })
        .collect();
    PolicySchedule {
        num_states: q.num_states,
        num_actions: na,
        probs,
    }
}

/// Samples a trajectory of `steps` transitions from `start`.
///
/// Policies shorter than `steps` are read at their last time index.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &PolicySchedule,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    mdp.check_state(start)?;
    if steps > mdp.horizon() {
        return Err(Error::arg(format!("{steps} steps exceed horizon {}", mdp.horizon())));
    }
    if steps > 0 && policy.horizon() == 0 {
        return Err(Error::arg("policy has no time steps"));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut s = start;
    states.push(s);
    for t in 0..steps {
        let a = sample_index(policy.row(t.min(policy.horizon() - 1), s), rng);
        let succ = mdp.successors(s, a);
        s = if succ.len() == 1 {
            succ[0].0
        } else {
            let weights: Vec<f64> = succ.iter().map(|(_, p)| *p).collect();
            succ[sample_index(&weights, rng)].0
        };
        actions.push(a);
        states.push(s);
    }
    Trajectory::new(states, actions, Direction::Forward)
}

/// Exact expected feature counts under `policy`, with horizon equal to the policy's.
pub fn feature_expectations(mdp: &TabularMdp, features: &FeatureMap, policy: &PolicySchedule) -> FeatureExpectations {
    let (ns, na, n) = (mdp.num_states(), mdp.num_actions(), features.dim());
    let horizon = policy.horizon();
    let mut f = vec![Vec::new(); horizon + 1];
    let mut base = vec![0.0; ns * n];
    for s in 0..ns {
        base[s * n..(s + 1) * n].copy_from_slice(features.eval(s));
    }
    f[horizon] = base;
    for t in (0..horizon).rev() {
        let mut ft = vec![0.0; ns * n];
        for s in 0..ns {
            let out = &mut ft[s * n..(s + 1) * n];
            out.copy_from_slice(features.eval(s));
            let pi = policy.row(t, s);
            for a in 0..na {
                if pi[a] == 0.0 {
                    continue;
                }
                for &(next, p) in mdp.successors(s, a) {
                    let w = pi[a] * p;
                    let src = &f[t + 1][next * n..(next + 1) * n];
                    for (o, x) in out.iter_mut().zip(src) {
                        *o += w * x;
                    }
                }
            }
        }
        f[t] = ft;
    }
    FeatureExpectations { dim: n, f }
}

/// Expected next-step feature expectation `E_{s'∼𝒯(s,a)}[ℱ_{t}(s')]`.
pub(crate) fn expected_next(mdp: &TabularMdp, fe: &FeatureExpectations, t: usize, s: usize, a: usize) -> Vec<f64> {
    let mut out = vec![0.0; fe.dim];
    for &(next, p) in mdp.successors(s, a) {
        for (o, x) in out.iter_mut().zip(fe.at(t, next)) {
            *o += p * x;
        }
    }
    out
}

/// MCEIRL gradient of `ln p(τ | θ)` for a demonstrated trajectory.
///
/// The trajectory is treated as a full episode: planning uses a horizon equal
/// to its number of transitions, which must not exceed the MDP's horizon.
pub fn mceirl_trajectory_gradient(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    tau: &Trajectory,
    include_correction: bool,
) -> Result<Vec<f64>> {
    let len = tau.len();
    if len > mdp.horizon() {
        return Err(Error::arg(format!(
            "trajectory of length {len} exceeds horizon {}",
            mdp.horizon()
        )));
    }
    for &s in &tau.states {
        mdp.check_state(s)?;
    }
    if let Some(&a) = tau.actions.iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::arg(format!("action {a} out of range")));
    }
    let policy = boltzmann_policy(&soft_value_iteration_for(mdp, features, theta, len)?);
    let fe = feature_expectations(mdp, features, &policy);
    Ok(trajectory_gradient_with(mdp, features, &fe, tau, include_correction))
}

/// Gradient of a trajectory given precomputed feature expectations of matching horizon.
pub(crate) fn trajectory_gradient_with(
    mdp: &TabularMdp,
    features: &FeatureMap,
    fe: &FeatureExpectations,
    tau: &Trajectory,
    include_correction: bool,
) -> Vec<f64> {
    let n = features.dim();
    let mut grad = vec![0.0; n];
    for &s in &tau.states {
        for (g, x) in grad.iter_mut().zip(features.eval(s)) {
            *g += x;
        }
    }
    for (g, x) in grad.iter_mut().zip(fe.at(0, tau.states[0])) {
        *g -= x;
    }
    if include_correction {
        for t in 0..tau.len() {
            let (s, a, next) = (tau.states[t], tau.actions[t], tau.states[t + 1]);
            let expected = expected_next(mdp, fe, t + 1, s, a);
            for ((g, e), x) in grad.iter_mut().zip(&expected).zip(fe.at(t + 1, next)) {
                *g += e - x;
            }
        }
    }
    grad
}

pub(crate) fn check_features(mdp: &TabularMdp, features: &FeatureMap, theta: &RewardParams) -> Result<()> {
    if features.num_states() != mdp.num_states() {
        return Err(Error::arg(format!(
            "feature map covers {} states, MDP has {}",
            features.num_states(),
            mdp.num_states()
        )));
    }
    if theta.dim() != features.dim() {
        return Err(Error::arg(format!(
            "theta has dimension {}, features have {}",
            theta.dim(),
            features.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two states, action 0 stays, action 1 moves to the other state.
    fn chain(horizon: usize) -> (TabularMdp, FeatureMap) {
        let mdp = TabularMdp::from_dense(
            &[
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            vec![1.0, 0.0],
            horizon,
        )
        .unwrap();
        let fm = FeatureMap::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        (mdp, fm)
    }

    #[test]
    fn zero_reward_gives_uniform_policy() {
        let (mdp, fm) = chain(3);
        let pol = boltzmann_policy(&soft_value_iteration(&mdp, &fm, &RewardParams::zeros(1)).unwrap());
        for t in 0..3 {
            for s in 0..2 {
                assert!((pol.row(t, s)[0] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_step_backup_difference() {
        let (mdp, fm) = chain(1);
        let q = soft_value_iteration(&mdp, &fm, &RewardParams::new(vec![1.0]).unwrap()).unwrap();
        let row = q.row(0, 0);
        assert!((row[1] - row[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn values_are_log_sum_exp_of_q() {
        let (mdp, fm) = chain(4);
        let q = soft_value_iteration(&mdp, &fm, &RewardParams::new(vec![0.7]).unwrap()).unwrap();
        for t in 0..4 {
            for s in 0..2 {
                assert!((q.v[t][s] - log_sum_exp(q.row(t, s))).abs() < 1e-9);
            }
        }
        assert_eq!(q.v[4], vec![0.0, 0.7]);
    }

    #[test]
    fn empty_rollout() {
        let (mdp, fm) = chain(2);
        let pol = boltzmann_policy(&soft_value_iteration(&mdp, &fm, &RewardParams::zeros(1)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tau = rollout(&mdp, &pol, 1, 0, &mut rng).unwrap();
        assert_eq!(tau.states, vec![1]);
        assert!(tau.actions.is_empty());
        assert!(rollout(&mdp, &pol, 0, 3, &mut rng).is_err());
    }

    #[test]
    fn absorbing_state_accumulates() {
        let mdp = TabularMdp::from_dense(&[vec![vec![1.0]]], vec![1.0], 5).unwrap();
        let fm = FeatureMap::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let pol = boltzmann_policy(&soft_value_iteration(&mdp, &fm, &RewardParams::zeros(2)).unwrap());
        let fe = feature_expectations(&mdp, &fm, &pol);
        assert_eq!(fe.at(0, 0), &[6.0, 0.0]);
        assert_eq!(fe.at(5, 0), &[1.0, 0.0]);
    }

    #[test]
    fn correction_vanishes_on_deterministic_mdp() {
        let (mdp, fm) = chain(3);
        let theta = RewardParams::new(vec![0.3]).unwrap();
        let tau = Trajectory::new(vec![0, 1, 1, 0], vec![1, 0, 1], Direction::Forward).unwrap();
        let with = mceirl_trajectory_gradient(&mdp, &fm, &theta, &tau, true).unwrap();
        let without = mceirl_trajectory_gradient(&mdp, &fm, &theta, &tau, false).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn near_deterministic_policy_matches_demonstration() {
        let (mdp, fm) = chain(3);
        let theta = RewardParams::new(vec![40.0]).unwrap();
        // the optimal policy moves to state 1 and stays there
        let tau = Trajectory::new(vec![0, 1, 1, 1], vec![1, 0, 0], Direction::Forward).unwrap();
        let g = mceirl_trajectory_gradient(&mdp, &fm, &theta, &tau, true).unwrap();
        assert!(g[0].abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn trajectory_longer_than_horizon_is_rejected() {
        let (mdp, fm) = chain(1);
        let tau = Trajectory::new(vec![0, 1, 1], vec![1, 0], Direction::Forward).unwrap();
        let err = mceirl_trajectory_gradient(&mdp, &fm, &RewardParams::zeros(1), &tau, false);
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}
