//! Backend for continuous environments with learned features and inverse models.

use serde::{Deserialize, Serialize};

use super::{Backend, ReplayBuffer, TrainableBackend, WaypointsReward};
use crate::continuous::{evaluate_policy, optimize_policy_from, ContinuousEnv, Controller, MaxEntPolicy, RewardFn, SoftQConfig, StateReward};
use crate::error::{Error, Result};
use crate::models::{backward_step, rows_to_array, train_inverse_policy, InteractionDataset, InverseDynamics, InversePolicy, PolicyInput};
use crate::nn::{ApproximatorConfig, EncoderDecoder, MixtureDensityHead};
use crate::util::{dot, SimRng};

/// Linear reward `θᵀφ(s')` on encoder features.
#[derive(Debug, Clone)]
pub struct LinearFeatureReward<'a> {
    pub theta: &'a [f64],
    pub encoder: &'a EncoderDecoder,
}

fn encode_states(env: &ContinuousEnv, encoder: &EncoderDecoder, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let obs: Vec<Vec<f64>> = states.iter().map(|s| env.observe(s)).collect();
    let x = rows_to_array(&obs).expect("observations share a dimension");
    encoder.encode_batch(&x).rows().into_iter().map(|r| r.to_vec()).collect()
}

impl StateReward for LinearFeatureReward<'_> {
    fn rewards(&self, env: &ContinuousEnv, next_states: &[Vec<f64>]) -> Vec<f64> {
        encode_states(env, self.encoder, next_states).iter().map(|phi| dot(self.theta, phi)).collect()
    }
}

/// Waypoints reward on encoder features.
#[derive(Debug, Clone)]
pub struct WaypointsStateReward<'a> {
    pub reward: &'a WaypointsReward,
    pub encoder: &'a EncoderDecoder,
}

impl StateReward for WaypointsStateReward<'_> {
    fn rewards(&self, env: &ContinuousEnv, next_states: &[Vec<f64>]) -> Vec<f64> {
        encode_states(env, self.encoder, next_states).iter().map(|phi| self.reward.reward(phi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousBackendConfig {
    /// Policy optimizer settings for each refresh.
    pub policy: SoftQConfig,
    /// Start every policy refresh from scratch instead of the previous policy.
    pub reinit_policy: bool,
    pub inverse_policy: ApproximatorConfig,
    pub head: MixtureDensityHead,
    /// Replay states labeled per inverse-policy refresh.
    pub inverse_samples: usize,
    /// Episodes of true-reward evaluation logged per epoch; 0 disables it.
    pub eval_episodes: usize,
}

impl Default for ContinuousBackendConfig {
    fn default() -> Self {
        Self {
            policy: SoftQConfig::default(),
            reinit_policy: false,
            inverse_policy: ApproximatorConfig {
                epochs: 10,
                ..ApproximatorConfig::density_desk()
            },
            head: MixtureDensityHead::default(),
            inverse_samples: 2000,
            eval_episodes: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousBackend {
    env: ContinuousEnv,
    encoder: EncoderDecoder,
    inv_dyn: InverseDynamics,
    dataset: InteractionDataset,
    cfg: ContinuousBackendConfig,
    policy: Option<MaxEntPolicy>,
    inv_pol: Option<InversePolicy>,
}

impl ContinuousBackend {
    pub fn new(
        env: ContinuousEnv,
        encoder: EncoderDecoder,
        inv_dyn: InverseDynamics,
        dataset: InteractionDataset,
        cfg: ContinuousBackendConfig,
    ) -> Self {
        Self {
            env,
            encoder,
            inv_dyn,
            dataset,
            cfg,
            policy: None,
            inv_pol: None,
        }
    }

    pub fn env(&self) -> &ContinuousEnv {
        &self.env
    }

    pub fn encoder(&self) -> &EncoderDecoder {
        &self.encoder
    }

    pub fn policy(&self) -> Option<&MaxEntPolicy> {
        self.policy.as_ref()
    }

    /// Replaces the forward policy, e.g. with a fixed controller's trained stand-in.
    pub fn set_policy(&mut self, policy: MaxEntPolicy) {
        self.policy = Some(policy);
    }

    pub fn inverse_policy(&self) -> Option<&InversePolicy> {
        self.inv_pol.as_ref()
    }

    fn forward(&self) -> Result<&MaxEntPolicy> {
        self.policy.as_ref().ok_or_else(|| Error::State("forward policy not trained".into()))
    }
}

impl Backend for ContinuousBackend {
    type State = Vec<f64>;
    type Action = Vec<f64>;

    fn feature_dim(&self) -> usize {
        self.encoder.latent_dim
    }

    fn features(&self, s: &Vec<f64>) -> Vec<f64> {
        self.encoder.encode(&self.env.observe(s))
    }

    fn simulate(&self, s: &Vec<f64>, a: &Vec<f64>) -> Vec<f64> {
        self.env.transition(s, a).state
    }

    fn same_state(&self, a: &Vec<f64>, b: &Vec<f64>) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    fn state_vector(&self, s: &Vec<f64>) -> Vec<f64> {
        s.clone()
    }

    fn act(&self, _t: usize, s: &Vec<f64>, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.forward()?.act(&self.env, s, rng))
    }

    fn step_back(&self, _k: usize, s_next: &Vec<f64>, rng: &mut SimRng) -> Result<(Vec<f64>, Vec<f64>)> {
        let inv_pol = self.inv_pol.as_ref().ok_or_else(|| Error::State("inverse policy not trained".into()))?;
        Ok(backward_step(&self.inv_dyn, inv_pol, s_next, rng))
    }
}

impl TrainableBackend for ContinuousBackend {
    fn seed_transitions(&self) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.dataset.transitions().iter().map(|t| (t.s.clone(), t.a.clone(), t.next.clone())).collect()
    }

    fn refresh_policy(&mut self, theta: &[f64], _horizon: usize, rng: &mut SimRng) -> Result<()> {
        let reward = LinearFeatureReward {
            theta,
            encoder: &self.encoder,
        };
        let init = if self.cfg.reinit_policy { None } else { self.policy.as_ref() };
        let policy = optimize_policy_from(&self.env, RewardFn::States(&reward), &self.cfg.policy, init, rng)?;
        self.policy = Some(policy);
        Ok(())
    }

    fn refresh_inverse(&mut self, replay: &ReplayBuffer<Vec<f64>, Vec<f64>>, _horizon: usize, rng: &mut SimRng) -> Result<()> {
        let policy = self.forward()?;
        let inv = train_inverse_policy(
            replay,
            policy,
            &self.env,
            PolicyInput::Encoder(self.encoder.clone()),
            self.cfg.inverse_samples,
            &self.cfg.inverse_policy,
            self.cfg.head,
            rng,
        )?;
        self.inv_pol = Some(inv);
        Ok(())
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Option<Vec<f64>> {
        Some(self.env.sample_initial(rng))
    }

    fn eval_return(&self, rng: &mut SimRng) -> Option<f64> {
        if self.cfg.eval_episodes == 0 {
            return None;
        }
        let policy = self.policy.as_ref()?;
        evaluate_policy(&self.env, policy, self.cfg.eval_episodes, rng).ok().map(|r| r.mean)
    }
}
