//! Continuous-task pipeline: expert, observed states, learned models, reward
//! inference, reoptimization and evaluation on the true reward.

use ndarray::Array2;
use rand::seq::index::sample;

use super::config::{Method, ProfileSettings};
use crate::continuous::{
    evaluate_policy, optimize_policy, run_episode, ActionGrid, ContinuousEnv, EvalReport, MaxEntPolicy, RewardFn,
    SoftQConfig,
};
use crate::deep::{
    average_features_reward, deep_rlsp, waypoints_reward, AuditReport, ContinuousBackend, DeepRlspConfig, EpochRecord,
    LinearFeatureReward, ObservedStateSet, WaypointsStateReward,
};
use crate::error::{Error, Result};
use crate::models::{collect_dataset, train_inverse_dynamics, DatasetSource, InteractionDataset, InverseDynamics};
use crate::nn::{train_encoder, EncoderDecoder};
use crate::continuous::EnvName;
use crate::util::{seeded_rng, SimRng};

/// Episodes of expert play gathered before sampling observed states.
const MAX_EXPERT_EPISODES: usize = 100;

/// Everything a reward-inference method consumes, shared across methods for one seed.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub env: ContinuousEnv,
    pub expert: MaxEntPolicy,
    pub expert_eval: EvalReport,
    pub observed: Vec<Vec<f64>>,
    pub dataset: InteractionDataset,
    pub encoder: EncoderDecoder,
    pub inverse_dynamics: InverseDynamics,
}

/// The expert and its rollouts only; used where no learned models are needed.
pub fn train_expert(env: &ContinuousEnv, settings: &ProfileSettings, rng: &mut SimRng) -> Result<(MaxEntPolicy, EvalReport)> {
    let expert = optimize_policy(env, RewardFn::True, &settings.expert_policy, rng)?;
    let eval = evaluate_policy(env, &expert, settings.eval_episodes, rng)?;
    Ok((expert, eval))
}

/// Samples `n` states uniformly without replacement from expert rollouts,
/// skipping the first `burn_in` steps of every episode.
pub fn sample_observed_states(
    env: &ContinuousEnv,
    expert: &MaxEntPolicy,
    n: usize,
    burn_in: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec<f64>>> {
    let mut pool = Vec::new();
    let mut episodes = 0;
    // several episodes so the sample is not dominated by a single start state
    while pool.len() < n.max(env.episode_len()) {
        if episodes == MAX_EXPERT_EPISODES {
            return Err(Error::State(format!(
                "only {} expert states after {episodes} episodes, {n} requested",
                pool.len()
            )));
        }
        run_episode(env, expert, rng, |t, s| {
            if t >= burn_in {
                pool.push(s.to_vec());
            }
        });
        episodes += 1;
    }
    Ok(sample(rng, pool.len(), n).into_iter().map(|i| pool[i].clone()).collect())
}

/// Interaction data used for the learned models; the pendulum mixes in
/// near-upright play since random actions never balance the pole.
pub fn dataset_source(env: EnvName) -> DatasetSource {
    match env {
        EnvName::Pendulum => DatasetSource::ExpertMixed,
        _ => DatasetSource::RandomRollouts,
    }
}

pub fn train_state_encoder(env: &ContinuousEnv, dataset: &InteractionDataset, settings: &ProfileSettings) -> Result<EncoderDecoder> {
    let states = dataset.states();
    let mut x = Array2::zeros((states.len(), env.obs_dim()));
    for (mut row, s) in x.rows_mut().into_iter().zip(&states) {
        row.assign(&ndarray::ArrayView1::from(&env.observe(s)));
    }
    train_encoder(&x, &settings.encoder, settings.latent_dim, settings.kl_weight)
}

pub fn prepare_task(env: EnvName, num_states: usize, settings: &ProfileSettings, rng: &mut SimRng) -> Result<PreparedTask> {
    let env = ContinuousEnv::new(env);
    let (expert, expert_eval) = train_expert(&env, settings, rng)?;
    log::info!("{}: expert return {:.1} ({:.1})", env.name(), expert_eval.mean, expert_eval.stderr);
    let observed = sample_observed_states(&env, &expert, num_states, settings.burn_in, rng)?;
    let dataset = collect_dataset(
        &env,
        dataset_source(env.name()),
        settings.dataset_rollouts,
        settings.dataset_rollout_len,
        rng,
    )?;
    let encoder = train_state_encoder(&env, &dataset, settings)?;
    let inverse_dynamics = train_inverse_dynamics(&env, &dataset, &settings.inverse_dynamics)?;
    log::info!(
        "{}: encoder recon {:.4}, inverse dynamics loss {:.4}",
        env.name(),
        encoder.final_recon,
        inverse_dynamics.model().final_loss
    );
    Ok(PreparedTask {
        env,
        expert,
        expert_eval,
        observed,
        dataset,
        encoder,
        inverse_dynamics,
    })
}

/// RNG for everything after [`prepare_task`]: a separate ChaCha stream per
/// method, so methods compared on one seed share the task but not their noise.
pub fn method_rng(seed: u64, method: Method, prior_weighting: bool) -> SimRng {
    let idx = Method::ALL.iter().position(|m| *m == method).expect("listed method") as u64;
    let mut rng = seeded_rng(seed);
    rng.set_stream(1 + 2 * idx + prior_weighting as u64);
    rng
}

/// Result of one method on one prepared task.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    /// Linear reward weights; empty for waypoints.
    pub theta: Vec<f64>,
    pub policy: MaxEntPolicy,
    pub eval: EvalReport,
    pub log: Vec<EpochRecord>,
    pub audit: Option<AuditReport>,
}

/// Infers a reward with `method`, optimizes it with the final budget and
/// evaluates the policy on the true reward.
pub fn run_method(
    task: &PreparedTask,
    method: Method,
    settings: &ProfileSettings,
    deep: &DeepRlspConfig,
    rng: &mut SimRng,
) -> Result<MethodOutcome> {
    let env = &task.env;
    let final_cfg = settings.final_policy_config();
    let features: Vec<Vec<f64>> = task.observed.iter().map(|s| task.encoder.encode(&env.observe(s))).collect();
    let (theta, policy, log, audit) = match method {
        Method::RlspExact => return Err(Error::Config("rlsp_exact requires a tabular environment".into())),
        Method::AverageFeatures => {
            let theta = average_features_reward(&features)?.into_inner();
            let policy = optimize_linear(task, &theta, &final_cfg, rng)?;
            (theta, policy, Vec::new(), None)
        }
        Method::Waypoints => {
            let reward = waypoints_reward(&features)?;
            let state_reward = WaypointsStateReward {
                reward: &reward,
                encoder: &task.encoder,
            };
            let policy = optimize_policy(env, RewardFn::States(&state_reward), &final_cfg, rng)?;
            (Vec::new(), policy, Vec::new(), None)
        }
        Method::DeepRlsp => {
            let mut backend = ContinuousBackend::new(
                env.clone(),
                task.encoder.clone(),
                task.inverse_dynamics.clone(),
                task.dataset.clone(),
                settings.backend.clone(),
            );
            let obs = ObservedStateSet::new(task.observed.clone())?;
            let out = deep_rlsp(&obs, &mut backend, deep, rng)?;
            let theta = out.theta.into_inner();
            let policy = optimize_linear(task, &theta, &final_cfg, rng)?;
            (theta, policy, out.log, Some(out.audit))
        }
    };
    let eval = evaluate_policy(env, &policy, settings.eval_episodes, rng)?;
    log::info!("{} {}: return {:.1} ({:.1})", env.name(), method.as_str(), eval.mean, eval.stderr);
    Ok(MethodOutcome {
        theta,
        policy,
        eval,
        log,
        audit,
    })
}

fn optimize_linear(task: &PreparedTask, theta: &[f64], cfg: &SoftQConfig, rng: &mut SimRng) -> Result<MaxEntPolicy> {
    let reward = LinearFeatureReward {
        theta,
        encoder: &task.encoder,
    };
    optimize_policy(&task.env, RewardFn::States(&reward), cfg, rng)
}

/// Return of the uniform policy over the action grid.
pub fn random_baseline(env: &ContinuousEnv, episodes: usize, rng: &mut SimRng) -> Result<EvalReport> {
    let cfg = SoftQConfig::default();
    let grid = ActionGrid::new(&env.action_bounds(), cfg.grid_points)?;
    evaluate_policy(env, &MaxEntPolicy::uniform(grid, cfg.temperature), episodes, rng)
}
