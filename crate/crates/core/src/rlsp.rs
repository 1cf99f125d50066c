//! Exact reward inference from a single observed state on tabular MDPs,
//! a brute-force enumeration oracle, and the λ-combination evaluation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planning::{
    boltzmann_policy, check_features, expected_next, feature_expectations, soft_value_iteration_for,
    trajectory_gradient_with, Direction, FeatureExpectations, PolicySchedule, Trajectory,
};
use crate::tabular::{CaseName, FeatureMap, GridworldCase, RewardParams, TabularMdp};

/// Limit on `(|S||A|)^T` for brute-force enumeration.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlspConfig {
    pub horizon_t: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2_project: bool,
    pub include_correction: bool,
}

impl Default for RlspConfig {
    fn default() -> Self {
        Self {
            horizon_t: 1,
            learning_rate: 0.1,
            iterations: 200,
            l2_project: true,
            include_correction: true,
        }
    }
}

impl RlspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.horizon_t == 0 {
            return Err(Error::Config("horizon_t must be at least 1".into()));
        }
        Ok(())
    }
}

struct Posterior {
    policy: PolicySchedule,
    fe: FeatureExpectations,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    likelihood: f64,
}

fn posterior(mdp: &TabularMdp, features: &FeatureMap, theta: &RewardParams, s0: usize, t: usize) -> Result<Posterior> {
    check_features(mdp, features, theta)?;
    mdp.check_state(s0)?;
    if t == 0 || t > mdp.horizon() {
        return Err(Error::arg(format!("T = {t} must be in 1..={}", mdp.horizon())));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let policy = boltzmann_policy(&soft_value_iteration_for(mdp, features, theta, t)?);
    let fe = feature_expectations(mdp, features, &policy);

    let mut alpha = vec![mdp.initial_dist().to_vec()];
    for k in 0..t {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mass = alpha[k][s];
            if mass == 0.0 {
                continue;
            }
            let pi = policy.row(k, s);
            for a in 0..na {
                for &(n, p) in mdp.successors(s, a) {
                    next[n] += mass * pi[a] * p;
                }
            }
        }
        alpha.push(next);
    }
    let mut beta = vec![Vec::new(); t + 1];
    let mut last = vec![0.0; ns];
    last[s0] = 1.0;
    beta[t] = last;
    for k in (0..t).rev() {
        let mut cur = vec![0.0; ns];
        for (s, c) in cur.iter_mut().enumerate() {
            let pi = policy.row(k, s);
            for a in 0..na {
                let reach: f64 = mdp.successors(s, a).iter().map(|&(n, p)| p * beta[k + 1][n]).sum();
                *c += pi[a] * reach;
            }
        }
        beta[k] = cur;
    }
    let likelihood = alpha[t][s0];
    if likelihood <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    Ok(Posterior {
        policy,
        fe,
        alpha,
        beta,
        likelihood,
    })
}

/// `E_{τ ∼ p(·|s₀, θ)}[∇θ ln p(τ|θ)]` over trajectories of length `t` ending at `s0`,
/// computed by a forward-backward pass.
///
/// With `include_correction` this is the exact gradient of `ln p(s₀|θ)`.
pub fn exact_state_gradient(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    s0: usize,
    t: usize,
    include_correction: bool,
) -> Result<Vec<f64>> {
    let post = posterior(mdp, features, theta, s0, t)?;
    let (ns, na, n) = (mdp.num_states(), mdp.num_actions(), features.dim());
    let z = post.likelihood;
    let mut grad = vec![0.0; n];
    for k in 0..=t {
        for s in 0..ns {
            let w = post.alpha[k][s] * post.beta[k][s] / z;
            if w == 0.0 {
                continue;
            }
            for (g, x) in grad.iter_mut().zip(features.eval(s)) {
                *g += w * x;
            }
            if k == 0 {
                for (g, x) in grad.iter_mut().zip(post.fe.at(0, s)) {
                    *g -= w * x;
                }
            }
        }
    }
    if include_correction {
        for k in 0..t {
            for s in 0..ns {
                if post.alpha[k][s] == 0.0 {
                    continue;
                }
                let pi = post.policy.row(k, s);
                for a in 0..na {
                    let w = post.alpha[k][s] * pi[a] / z;
                    if w == 0.0 {
                        continue;
                    }
                    let succ = mdp.successors(s, a);
                    let reach: f64 = succ.iter().map(|&(m, p)| p * post.beta[k + 1][m]).sum();
                    if reach == 0.0 {
                        continue;
                    }
                    let expected = expected_next(mdp, &post.fe, k + 1, s, a);
                    for (i, g) in grad.iter_mut().enumerate() {
                        let realized: f64 = succ
                            .iter()
                            .map(|&(m, p)| p * post.beta[k + 1][m] * post.fe.at(k + 1, m)[i])
                            .sum();
                        *g += w * (expected[i] * reach - realized);
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Exact `ln p(s₀ | θ)` for trajectories of length `t`.
pub fn log_likelihood(mdp: &TabularMdp, features: &FeatureMap, theta: &RewardParams, s0: usize, t: usize) -> Result<f64> {
    Ok(posterior(mdp, features, theta, s0, t)?.likelihood.ln())
}

/// Enumerates every length-`t` trajectory ending at `s0` and averages their
/// MCEIRL gradients weighted by `p(τ|θ)`.
pub fn brute_force_state_gradient(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    s0: usize,
    t: usize,
    include_correction: bool,
) -> Result<Vec<f64>> {
    check_features(mdp, features, theta)?;
    mdp.check_state(s0)?;
    if t == 0 || t > mdp.horizon() {
        return Err(Error::arg(format!("T = {t} must be in 1..={}", mdp.horizon())));
    }
    let estimate = ((mdp.num_states() * mdp.num_actions()) as f64).powi(t as i32);
    if estimate > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchTooLarge {
            estimate,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let policy = boltzmann_policy(&soft_value_iteration_for(mdp, features, theta, t)?);
    let fe = feature_expectations(mdp, features, &policy);

    struct Walk<'a> {
        mdp: &'a TabularMdp,
        features: &'a FeatureMap,
        policy: &'a PolicySchedule,
        fe: &'a FeatureExpectations,
        s0: usize,
        t: usize,
        correction: bool,
        total: f64,
        grad: Vec<f64>,
        states: Vec<usize>,
        actions: Vec<usize>,
    }

    impl Walk<'_> {
        fn visit(&mut self, prob: f64) {
            let k = self.actions.len();
            let s = *self.states.last().expect("walk starts with a state");
            if k == self.t {
                if s == self.s0 {
                    let tau = Trajectory {
                        states: self.states.clone(),
                        actions: self.actions.clone(),
                        direction: Direction::Forward,
                    };
                    let g = trajectory_gradient_with(self.mdp, self.features, self.fe, &tau, self.correction);
                    self.total += prob;
                    for (acc, x) in self.grad.iter_mut().zip(&g) {
                        *acc += prob * x;
                    }
                }
                return;
            }
            for a in 0..self.mdp.num_actions() {
                let pa = self.policy.row(k, s)[a];
                if pa == 0.0 {
                    continue;
                }
                for &(n, p) in self.mdp.successors(s, a) {
                    self.states.push(n);
                    self.actions.push(a);
                    self.visit(prob * pa * p);
                    self.states.pop();
                    self.actions.pop();
                }
            }
        }
    }

    let mut walk = Walk {
        mdp,
        features,
        policy: &policy,
        fe: &fe,
        s0,
        t,
        correction: include_correction,
        total: 0.0,
        grad: vec![0.0; features.dim()],
        states: Vec::with_capacity(t + 1),
        actions: Vec::with_capacity(t),
    };
    for (start, &p) in mdp.initial_dist().iter().enumerate() {
        if p > 0.0 {
            walk.states.push(start);
            walk.visit(p);
            walk.states.pop();
        }
    }
    if walk.total <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    let total = walk.total;
    Ok(walk.grad.into_iter().map(|g| g / total).collect())
}

/// Gradient ascent on `ln p(s₀ | θ)` from θ = 0.
pub fn infer_reward(mdp: &TabularMdp, features: &FeatureMap, s0: usize, cfg: &RlspConfig) -> Result<RewardParams> {
    infer_reward_with(mdp, features, s0, cfg, |_, _| {})
}

/// As [`infer_reward`], calling `observe(iteration, θ)` after every update.
pub fn infer_reward_with(
    mdp: &TabularMdp,
    features: &FeatureMap,
    s0: usize,
    cfg: &RlspConfig,
    mut observe: impl FnMut(usize, &RewardParams),
) -> Result<RewardParams> {
    cfg.validate()?;
    let mut theta = vec![0.0; features.dim()];
    for it in 0..cfg.iterations {
        let params = RewardParams::new(theta.clone())?;
        let g = exact_state_gradient(mdp, features, &params, s0, cfg.horizon_t, cfg.include_correction)?;
        for (w, gi) in theta.iter_mut().zip(&g) {
            *w += cfg.learning_rate * gi;
        }
        let norm = crate::util::norm(&theta);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { iteration: it, norm });
        }
        // a gradient at round-off level carries no direction worth normalizing
        if cfg.l2_project && norm > 1e-10 {
            theta.iter_mut().for_each(|w| *w /= norm);
        }
        observe(it, &RewardParams::new(theta.clone())?);
    }
    RewardParams::new(theta)
}

/// Per-λ evaluation of `R_spec + λ R_inferred`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub lambdas: Vec<f64>,
    pub returns_true: Vec<f64>,
    pub behavior_labels: Vec<String>,
}

impl LambdaReport {
    /// Label at the first λ whose behavior differs from λ = 0, or the λ = 0 label if none does.
    pub fn first_change(&self) -> Option<&str> {
        let base = self.behavior_labels.first()?;
        Some(
            self.behavior_labels
                .iter()
                .find(|l| *l != base)
                .unwrap_or(base)
                .as_str(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "return_true", "behavior_label"])?;
        for ((l, r), b) in self.lambdas.iter().zip(&self.returns_true).zip(&self.behavior_labels) {
            w.write_record([format!("{l}"), format!("{r}"), b.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default λ grid 0, 0.1, …, 2.0.
pub fn default_lambdas() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

/// Finite-horizon (hard) value iteration; returns the greedy action per `(t, s)`.
///
/// Ties go to the lowest action index, so "stay" wins over equally good moves.
pub fn hard_value_iteration(mdp: &TabularMdp, rewards: &[f64], horizon: usize) -> Vec<Vec<usize>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = rewards.to_vec();
    let mut choices = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let mut nv = vec![0.0; ns];
        let mut best_a = vec![0; ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let q: f64 = rewards[s] + mdp.successors(s, a).iter().map(|&(n, p)| p * v[n]).sum::<f64>();
                if a == 0 || q > best + 1e-9 * best.abs().max(1.0) {
                    best = q;
                    best_a[s] = a;
                }
            }
            nv[s] = best;
        }
        v = nv;
        choices[t] = best_a;
    }
    choices
}

/// Most-likely rollout of a deterministic policy from `start`.
pub fn greedy_rollout(mdp: &TabularMdp, choices: &[Vec<usize>], start: usize) -> Trajectory {
    let mut states = vec![start];
    let mut actions = Vec::with_capacity(choices.len());
    let mut s = start;
    for row in choices {
        let a = row[s];
        s = mdp
            .successors(s, a)
            .iter()
            .fold((s, f64::NEG_INFINITY), |best, &(n, p)| if p > best.1 { (n, p) } else { best })
            .0;
        actions.push(a);
        states.push(s);
    }
    Trajectory {
        states,
        actions,
        direction: Direction::Forward,
    }
}

/// Behavior of the optimal policy for a given reward from the observed state.
pub fn plan_and_label(case: &GridworldCase, rewards: &[f64]) -> (Trajectory, f64, String) {
    let choices = hard_value_iteration(&case.mdp, rewards, case.eval_horizon);
    let tau = greedy_rollout(&case.mdp, &choices, case.observed_state);
    let true_r = case.features.rewards(&case.true_reward);
    let ret = tau.states[1..].iter().map(|s| true_r[*s]).sum();
    let label = case.behavior_label(&tau);
    (tau, ret, label)
}

/// Plans for `R_spec + λ R_inferred` at each λ and evaluates under `R_true`.
pub fn lambda_sweep(case: &GridworldCase, inferred: &RewardParams, lambdas: &[f64]) -> Result<LambdaReport> {
    if inferred.dim() != case.features.dim() {
        return Err(Error::arg("inferred reward dimension does not match the case features"));
    }
    let inferred = inferred.normalized();
    let mut report = LambdaReport {
        lambdas: lambdas.to_vec(),
        returns_true: Vec::with_capacity(lambdas.len()),
        behavior_labels: Vec::with_capacity(lambdas.len()),
    };
    for &lambda in lambdas {
        let combined = case.spec_reward.combine(&inferred, lambda)?;
        let (_, ret, label) = plan_and_label(case, &case.features.rewards(&combined));
        report.returns_true.push(ret);
        report.behavior_labels.push(label);
    }
    Ok(report)
}

/// Case-level outcome of an inferred reward: the vase stance for the far-vase
/// case, otherwise the first behavior change along the λ sweep.
pub fn case_outcome(case: &GridworldCase, inferred: &RewardParams, report: &LambdaReport) -> String {
    if case.name == CaseName::FarVase {
        if let Some(stance) = case.vase_stance(inferred) {
            return stance;
        }
    }
    report.first_change().unwrap_or("none").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::mceirl_trajectory_gradient;

    fn line_mdp() -> (TabularMdp, FeatureMap) {
        // three states on a line, actions: stay, right (stochastic), left
        let mdp = TabularMdp::from_dense(
            &[
                vec![vec![1.0, 0.0, 0.0], vec![0.2, 0.8, 0.0], vec![1.0, 0.0, 0.0]],
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.3, 0.7], vec![1.0, 0.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
            ],
            vec![0.6, 0.4, 0.0],
            3,
        )
        .unwrap();
        let fm = FeatureMap::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.5], vec![0.3, 1.0]]).unwrap();
        (mdp, fm)
    }

    #[test]
    fn exact_matches_brute_force() {
        let (mdp, fm) = line_mdp();
        let theta = RewardParams::new(vec![0.4, -0.7]).unwrap();
        for corr in [false, true] {
            for t in 1..=3 {
                let e = exact_state_gradient(&mdp, &fm, &theta, 2, t, corr).unwrap();
                let b = brute_force_state_gradient(&mdp, &fm, &theta, 2, t, corr).unwrap();
                for (x, y) in e.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10, "{e:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn single_trajectory_reduces_to_mceirl() {
        // deterministic chain 0 -> 1 -> 2, one action
        let mdp = TabularMdp::from_dense(
            &[
                vec![vec![0.0, 1.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0]],
            ],
            vec![1.0, 0.0, 0.0],
            2,
        )
        .unwrap();
        let fm = FeatureMap::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let theta = RewardParams::new(vec![0.5]).unwrap();
        let tau = Trajectory::new(vec![0, 1, 2], vec![0, 0], Direction::Forward).unwrap();
        let expected = mceirl_trajectory_gradient(&mdp, &fm, &theta, &tau, true).unwrap();
        let got = exact_state_gradient(&mdp, &fm, &theta, 2, 2, true).unwrap();
        assert!((expected[0] - got[0]).abs() < 1e-12);
    }

    #[test]
    fn unreachable_state_has_zero_likelihood() {
        let (mdp, fm) = line_mdp();
        let theta = RewardParams::zeros(2);
        let single = mdp.with_initial_dist(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            exact_state_gradient(&single, &fm, &theta, 2, 1, true),
            Err(Error::ZeroLikelihood)
        ));
        assert!(matches!(
            brute_force_state_gradient(&single, &fm, &theta, 2, 1, true),
            Err(Error::ZeroLikelihood)
        ));
    }

    #[test]
    fn brute_force_refuses_large_spaces() {
        let case = crate::tabular::build_gridworld("room_vase").unwrap();
        let r = brute_force_state_gradient(
            &case.mdp,
            &case.features,
            &RewardParams::zeros(3),
            case.observed_state,
            5,
            true,
        );
        assert!(matches!(r, Err(Error::SearchTooLarge { .. })));
    }

    #[test]
    fn constant_features_keep_theta_zero() {
        let (mdp, _) = line_mdp();
        let fm = FeatureMap::from_rows(vec![vec![1.0]; 3]).unwrap();
        let cfg = RlspConfig {
            horizon_t: 2,
            iterations: 5,
            ..RlspConfig::default()
        };
        let theta = infer_reward(&mdp, &fm, 1, &cfg).unwrap();
        assert!(theta.weights()[0].abs() < 1e-12);
    }

    #[test]
    fn zero_inferred_gives_identical_returns() {
        let case = crate::tabular::build_gridworld("room_vase").unwrap();
        let rep = lambda_sweep(&case, &RewardParams::zeros(3), &default_lambdas()).unwrap();
        assert!(rep.returns_true.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(rep.lambdas.len(), rep.behavior_labels.len());
    }

    #[test]
    fn first_change_picks_first_differing_label() {
        let rep = LambdaReport {
            lambdas: vec![0.0, 0.1, 0.2],
            returns_true: vec![0.0; 3],
            behavior_labels: vec!["a".into(), "a".into(), "b".into()],
        };
        assert_eq!(rep.first_change(), Some("b"));
    }
}
