//! The sampled backward/forward reward-inference loop and its ablations.
//!
//! A [`Backend`] bundles the pieces the loop needs: features, the true
//! simulator, a forward policy and inverse models. Gradients compare feature
//! sums of trajectories simulated backwards from each observed state with
//! forward rollouts started at the backward terminals.

mod ablations;
mod continuous;
mod curriculum;
mod replay;
mod tabular;

use std::io::Write;

use log::{debug, info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ablations::{average_features_reward, waypoints_reward, WaypointsReward};
pub use continuous::{ContinuousBackend, ContinuousBackendConfig, LinearFeatureReward, WaypointsStateReward};
pub use curriculum::{curriculum_advance, CurriculumState};
pub use replay::{AuditReport, ReplayBuffer};
pub use tabular::{InversePrior, TabularBackend};

use crate::error::{Error, Result};
use crate::tabular::RewardParams;
use crate::util::{cosine, norm, SimRng};

/// Environment access, features and models used to sample gradients.
pub trait Backend {
    type State: Clone;
    type Action: Clone;

    fn feature_dim(&self) -> usize;
    /// Feature vector φ(s).
    fn features(&self, s: &Self::State) -> Vec<f64>;
    /// True simulator step; the most likely successor for stochastic dynamics.
    fn simulate(&self, s: &Self::State, a: &Self::Action) -> Self::State;
    /// Sampled simulator step used by forward rollouts.
    fn sample_step(&self, s: &Self::State, a: &Self::Action, _rng: &mut SimRng) -> Self::State {
        self.simulate(s, a)
    }
    /// Exact equality used by the relabeling audit.
    fn same_state(&self, a: &Self::State, b: &Self::State) -> bool;
    /// Raw state vector, used for prior weighting.
    fn state_vector(&self, s: &Self::State) -> Vec<f64>;
    /// Forward policy at time `t` of a rollout.
    fn act(&self, t: usize, s: &Self::State, rng: &mut SimRng) -> Result<Self::Action>;
    /// Samples `(a_{k}, s_{k})` given `s_{k+1}`; `k` counts forward time from the backward terminal.
    fn step_back(&self, k: usize, s_next: &Self::State, rng: &mut SimRng) -> Result<(Self::Action, Self::State)>;
}

/// Model (re)training hooks called by [`deep_rlsp`].
pub trait TrainableBackend: Backend {
    /// Transitions from the interaction dataset used to seed the replay buffer.
    fn seed_transitions(&self) -> Vec<(Self::State, Self::Action, Self::State)>;
    /// Refreshes the forward policy for reward weights `theta` and rollout length `horizon`.
    fn refresh_policy(&mut self, theta: &[f64], horizon: usize, rng: &mut SimRng) -> Result<()>;
    /// Refreshes the inverse policy from the replay buffer.
    fn refresh_inverse(
        &mut self,
        replay: &ReplayBuffer<Self::State, Self::Action>,
        horizon: usize,
        rng: &mut SimRng,
    ) -> Result<()>;
    /// A draw ŝ₋T from the initial-state distribution, if the backend has one.
    fn sample_prior(&self, _rng: &mut SimRng) -> Option<Self::State> {
        None
    }
    /// True-reward return of the current forward policy, if it can be evaluated.
    fn eval_return(&self, _rng: &mut SimRng) -> Option<f64> {
        None
    }
}

/// Observed states s₀ⁱ.
#[derive(Debug, Clone)]
pub struct ObservedStateSet<S> {
    states: Vec<S>,
}

impl<S> ObservedStateSet<S> {
    pub fn new(states: Vec<S>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::arg("at least one observed state is required"));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Sampled gradient together with the per-trajectory pieces it was built from.
#[derive(Debug, Clone)]
pub struct GradientEstimate<S> {
    /// Mean over observed states of (backward minus forward) feature sums.
    pub grad: Vec<f64>,
    /// Backward minus forward feature sums per trajectory pair.
    pub per_traj: Vec<Vec<f64>>,
    /// Backward terminal state of each pair.
    pub terminals: Vec<S>,
    /// Observed-state index of each pair.
    pub sources: Vec<usize>,
    pub backward_mean: Vec<f64>,
    pub forward_mean: Vec<f64>,
    /// Standard error of each gradient component.
    pub stderr: Vec<f64>,
}

/// Sampled gradient estimate of the observed-state likelihood.
///
/// For each observed state, `num_traj` trajectories of length `horizon` are
/// simulated backwards, then rolled forward from their terminals with the
/// forward policy and the true simulator. Backward transitions are relabeled by
/// the simulator and, like forward transitions, pushed to `replay` when given.
pub fn compute_grad<B: Backend>(
    obs: &ObservedStateSet<B::State>,
    backend: &B,
    horizon: usize,
    num_traj: usize,
    rng: &mut SimRng,
    mut replay: Option<&mut ReplayBuffer<B::State, B::Action>>,
) -> Result<GradientEstimate<B::State>> {
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least 1"));
    }
    if num_traj == 0 {
        return Err(Error::arg("num_traj must be at least 1"));
    }
    let n = backend.feature_dim();
    let mut est = GradientEstimate {
        grad: vec![0.0; n],
        per_traj: Vec::with_capacity(obs.len() * num_traj),
        terminals: Vec::with_capacity(obs.len() * num_traj),
        sources: Vec::with_capacity(obs.len() * num_traj),
        backward_mean: vec![0.0; n],
        forward_mean: vec![0.0; n],
        stderr: vec![0.0; n],
    };
    let scale = 1.0 / (obs.len() * num_traj) as f64;
    for (oi, s0) in obs.states().iter().enumerate() {
        for _ in 0..num_traj {
            let mut back = backend.features(s0);
            let mut s = s0.clone();
            for j in 0..horizon {
                let k = horizon - 1 - j;
                let (a, prev) = backend.step_back(k, &s, rng)?;
                for (b, x) in back.iter_mut().zip(backend.features(&prev)) {
                    *b += x;
                }
                if let Some(buf) = replay.as_deref_mut() {
                    buf.push_relabeled(prev.clone(), a, |p, a| backend.simulate(p, a));
                }
                s = prev;
            }
            let terminal = s.clone();
            let mut fwd = backend.features(&s);
            for t in 0..horizon {
                let a = backend.act(t, &s, rng)?;
                let next = backend.sample_step(&s, &a, rng);
                for (f, x) in fwd.iter_mut().zip(backend.features(&next)) {
                    *f += x;
                }
                if let Some(buf) = replay.as_deref_mut() {
                    buf.push(s, a, next.clone());
                }
                s = next;
            }
            for i in 0..n {
                est.backward_mean[i] += scale * back[i];
                est.forward_mean[i] += scale * fwd[i];
            }
            est.per_traj.push(back.iter().zip(&fwd).map(|(b, f)| b - f).collect());
            est.terminals.push(terminal);
            est.sources.push(oi);
        }
    }
    for g in &est.per_traj {
        for (acc, x) in est.grad.iter_mut().zip(g) {
            *acc += scale * x;
        }
    }
    let m = est.per_traj.len() as f64;
    if est.per_traj.len() > 1 {
        for i in 0..n {
            let var = est.per_traj.iter().map(|g| (g[i] - est.grad[i]).powi(2)).sum::<f64>() / (m - 1.0);
            est.stderr[i] = (var / m).sqrt();
        }
    }
    Ok(est)
}

/// Weights each trajectory's gradient by the cosine similarity between its
/// backward terminal and a prior sample ŝ₋T, clamped to `[0, 1]`.
pub fn weight_by_prior(grads: &[Vec<f64>], terminal_states: &[Vec<f64>], prior_sample: &[f64]) -> Result<Vec<f64>> {
    if grads.len() != terminal_states.len() {
        return Err(Error::arg("one terminal state per gradient is required"));
    }
    let dim = grads.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (g, term) in grads.iter().zip(terminal_states) {
        let w = match cosine(term, prior_sample) {
            Some(c) => c.clamp(0.0, 1.0),
            None => {
                warn!("zero-norm state vector in prior weighting; weight set to 0");
                0.0
            }
        };
        total += w;
        for (a, x) in acc.iter_mut().zip(g) {
            *a += w * x;
        }
    }
    if total == 0.0 {
        warn!("all prior weights are zero; returning a zero gradient");
        return Ok(vec![0.0; dim]);
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    Zero,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepRlspConfig {
    pub learning_rate: f64,
    pub num_traj: usize,
    pub grad_norm_threshold: f64,
    pub max_steps_per_t: usize,
    pub max_t: usize,
    pub normalize_theta: bool,
    pub prior_weighting: bool,
    pub theta_init: ThetaInit,
    pub replay_capacity: usize,
    pub audit_fraction: f64,
    pub seed: u64,
}

impl Default for DeepRlspConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            num_traj: 200,
            grad_norm_threshold: 2.0,
            max_steps_per_t: 10,
            max_t: 10,
            normalize_theta: true,
            prior_weighting: false,
            theta_init: ThetaInit::Zero,
            replay_capacity: 100_000,
            audit_fraction: 0.01,
            seed: 0,
        }
    }
}

impl DeepRlspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.num_traj == 0 || self.max_t == 0 || self.max_steps_per_t == 0 {
            return Err(Error::Config("num_traj, max_t and max_steps_per_t must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.audit_fraction) {
            return Err(Error::Config("audit_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One row of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub horizon_t: usize,
    pub steps_at_t: usize,
    pub grad_norm: f64,
    pub theta: Vec<f64>,
    pub eval_return: Option<f64>,
}

/// Result of a full inference run.
#[derive(Debug, Clone)]
pub struct DeepRlspOutcome {
    pub theta: RewardParams,
    pub log: Vec<EpochRecord>,
    pub audit: AuditReport,
}

/// Runs the inference loop until the curriculum completes its last horizon.
pub fn deep_rlsp<B: TrainableBackend>(
    obs: &ObservedStateSet<B::State>,
    backend: &mut B,
    cfg: &DeepRlspConfig,
    rng: &mut SimRng,
) -> Result<DeepRlspOutcome> {
    cfg.validate()?;
    let n = backend.feature_dim();
    let mut theta = match cfg.theta_init {
        ThetaInit::Zero => vec![0.0; n],
        ThetaInit::Random => {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            normalize_or_keep(raw)
        }
    };
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    for (s, a, next) in backend.seed_transitions() {
        replay.push(s, a, next);
    }
    let mut cs = CurriculumState::new(cfg.grad_norm_threshold, cfg.max_steps_per_t, cfg.max_t);
    let mut log = Vec::new();
    let mut audit = AuditReport::default();
    let mut epoch = 0;
    while !cs.finished {
        backend.refresh_policy(&theta, cs.horizon_t, rng)?;
        backend.refresh_inverse(&replay, cs.horizon_t, rng)?;
        let est = compute_grad(obs, backend, cs.horizon_t, cfg.num_traj, rng, Some(&mut replay))?;
        let grad = match (cfg.prior_weighting, backend.sample_prior(rng)) {
            (true, Some(prior)) => {
                let terms: Vec<Vec<f64>> = est.terminals.iter().map(|s| backend.state_vector(s)).collect();
                weight_by_prior(&est.per_traj, &terms, &backend.state_vector(&prior))?
            }
            (true, None) => {
                warn!("prior weighting requested but the backend has no prior sampler");
                est.grad.clone()
            }
            _ => est.grad.clone(),
        };
        let grad_norm = norm(&grad);
        for (w, g) in theta.iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
        if cfg.normalize_theta {
            theta = normalize_or_keep(theta);
        }
        if theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical(format!("theta became non-finite at epoch {epoch}")));
        }
        audit.merge(replay.audit(
            cfg.audit_fraction,
            rng,
            |s, a| backend.simulate(s, a),
            |x, y| backend.same_state(x, y),
        ));
        let eval_return = backend.eval_return(rng);
        debug!(
            "epoch {epoch} T={} step={} |g|={grad_norm:.4} theta={theta:?}",
            cs.horizon_t, cs.steps_at_t
        );
        log.push(EpochRecord {
            epoch,
            horizon_t: cs.horizon_t,
            steps_at_t: cs.steps_at_t,
            grad_norm,
            theta: theta.clone(),
            eval_return,
        });
        cs = curriculum_advance(&cs, grad_norm);
        epoch += 1;
    }
    info!("inference finished after {epoch} epochs; audit {}/{}", audit.passed, audit.checked);
    Ok(DeepRlspOutcome {
        theta: RewardParams::new(theta)?,
        log,
        audit,
    })
}

fn normalize_or_keep(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

/// Writes the epoch log as CSV: `epoch,T,steps_at_T,grad_norm,theta_0..,eval_return`.
pub fn write_epoch_log<W: Write>(log: &[EpochRecord], out: W) -> Result<()> {
    let dim = log.first().map_or(0, |r| r.theta.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epoch".to_string(), "T".into(), "steps_at_T".into(), "grad_norm".into()];
    header.extend((0..dim).map(|i| format!("theta_{i}")));
    header.push("eval_return".into());
    w.write_record(&header)?;
    for r in log {
        let mut row = vec![r.epoch.to_string(), r.horizon_t.to_string(), r.steps_at_t.to_string(), format!("{}", r.grad_norm)];
        row.extend(r.theta.iter().map(|x| format!("{x}")));
        row.push(r.eval_return.map(|x| format!("{x}")).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an epoch log written by [`write_epoch_log`].
pub fn read_epoch_log<R: std::io::Read>(input: R) -> Result<Vec<EpochRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let dim = headers.iter().filter(|h| h.starts_with("theta_")).count();
    let bad = |what: &str| Error::parse("epoch log", format!("bad {what}"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).ok_or_else(|| bad("row length"));
        out.push(EpochRecord {
            epoch: f(0)?.parse().map_err(|_| bad("epoch"))?,
            horizon_t: f(1)?.parse().map_err(|_| bad("T"))?,
            steps_at_t: f(2)?.parse().map_err(|_| bad("steps_at_T"))?,
            grad_norm: f(3)?.parse().map_err(|_| bad("grad_norm"))?,
            theta: (0..dim)
                .map(|i| f(4 + i)?.parse().map_err(|_| bad("theta")))
                .collect::<Result<_>>()?,
            eval_return: match f(4 + dim)? {
                "" => None,
                v => Some(v.parse().map_err(|_| bad("eval_return"))?),
            },
        });
    }
    Ok(out)
}

/// Checks that consecutive log rows follow the curriculum rule exactly and
/// that the run ends by completing `max_t`. Returns the first violation.
pub fn check_curriculum_log(log: &[EpochRecord], threshold: f64, max_steps_per_t: usize, max_t: usize) -> std::result::Result<(), String> {
    let first = log.first().ok_or("empty log")?;
    if first.horizon_t != 1 || first.steps_at_t != 1 {
        return Err("log does not start at T = 1".into());
    }
    for pair in log.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let advance = a.grad_norm < threshold || a.steps_at_t >= max_steps_per_t;
        let expected = if advance { (a.horizon_t + 1, 1) } else { (a.horizon_t, a.steps_at_t + 1) };
        if (b.horizon_t, b.steps_at_t) != expected {
            return Err(format!(
                "epoch {}: expected (T, step) = {:?}, found ({}, {})",
                b.epoch, expected, b.horizon_t, b.steps_at_t
            ));
        }
    }
    let last = log.last().expect("non-empty");
    if last.horizon_t != max_t || !(last.grad_norm < threshold || last.steps_at_t >= max_steps_per_t) {
        return Err(format!("run ended at T = {} without completing T = {max_t}", last.horizon_t));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_weighting_with_equal_terminals_is_plain_mean() {
        let grads = vec![vec![1.0, 2.0], vec![3.0, -2.0]];
        let terms = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let w = weight_by_prior(&grads, &terms, &[0.5, 0.5]).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12 && w[1].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_terminal_is_excluded() {
        let grads = vec![vec![1.0], vec![100.0]];
        let terms = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = weight_by_prior(&grads, &terms, &[1.0, 0.0]).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn epoch_log_round_trip() {
        let log = vec![
            EpochRecord { epoch: 0, horizon_t: 1, steps_at_t: 1, grad_norm: 3.5, theta: vec![0.6, -0.8], eval_return: None },
            EpochRecord { epoch: 1, horizon_t: 1, steps_at_t: 2, grad_norm: 1.0, theta: vec![1.0, 0.0], eval_return: Some(4.0) },
        ];
        let mut buf = Vec::new();
        write_epoch_log(&log, &mut buf).unwrap();
        assert_eq!(read_epoch_log(buf.as_slice()).unwrap(), log);
        assert!(check_curriculum_log(&log, 2.0, 10, 1).is_ok());
        assert!(check_curriculum_log(&log, 2.0, 10, 2).is_err());
    }
}
