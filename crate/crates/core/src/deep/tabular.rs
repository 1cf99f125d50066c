//! Backend for tabular MDPs with handcoded features and Bayes-derived inverse models.

use super::{Backend, ReplayBuffer, TrainableBackend};
use crate::error::{Error, Result};
use crate::models::{StatePrior, TabularInverse};
use crate::planning::{boltzmann_policy, soft_value_iteration_rewards, PolicySchedule};
use crate::tabular::{FeatureMap, RewardParams, TabularMdp};
use crate::util::{sample_index, SimRng};

/// How inverse models weigh candidate previous states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversePrior {
    /// Uniform over states; needs no knowledge of the initial state.
    Uniform,
    /// Forward occupancy from the MDP's initial distribution (exact posterior).
    Exact,
}

#[derive(Debug, Clone)]
pub struct TabularBackend {
    mdp: TabularMdp,
    features: FeatureMap,
    prior: InversePrior,
    policy: Option<PolicySchedule>,
    inverse: Option<TabularInverse>,
}

impl TabularBackend {
    pub fn new(mdp: TabularMdp, features: FeatureMap, prior: InversePrior) -> Self {
        Self {
            mdp,
            features,
            prior,
            policy: None,
            inverse: None,
        }
    }

    /// Backend with fixed models, e.g. for estimator checks.
    pub fn with_models(mdp: TabularMdp, features: FeatureMap, policy: PolicySchedule, inverse: TabularInverse) -> Self {
        Self {
            mdp,
            features,
            prior: InversePrior::Exact,
            policy: Some(policy),
            inverse: Some(inverse),
        }
    }

    pub fn policy(&self) -> Option<&PolicySchedule> {
        self.policy.as_ref()
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Backend for TabularBackend {
    type State = usize;
    type Action = usize;

    fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    fn features(&self, s: &usize) -> Vec<f64> {
        self.features.eval(*s).to_vec()
    }

    fn simulate(&self, s: &usize, a: &usize) -> usize {
        // most likely successor; the built-in gridworlds are deterministic
        self.mdp
            .successors(*s, *a)
            .iter()
            .fold((*s, f64::NEG_INFINITY), |best, &(n, p)| if p > best.1 { (n, p) } else { best })
            .0
    }

    fn sample_step(&self, s: &usize, a: &usize, rng: &mut SimRng) -> usize {
        match self.mdp.successors(*s, *a) {
            [(next, _)] => *next,
            succ => {
                let weights: Vec<f64> = succ.iter().map(|e| e.1).collect();
                succ[sample_index(&weights, rng)].0
            }
        }
    }

    fn same_state(&self, a: &usize, b: &usize) -> bool {
        a == b
    }

    fn state_vector(&self, s: &usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.num_states()];
        v[*s] = 1.0;
        v
    }

    fn act(&self, t: usize, s: &usize, rng: &mut SimRng) -> Result<usize> {
        let policy = self.policy.as_ref().ok_or_else(|| Error::State("forward policy not trained".into()))?;
        Ok(sample_index(policy.row(t.min(policy.horizon() - 1), *s), rng))
    }

    fn step_back(&self, k: usize, s_next: &usize, rng: &mut SimRng) -> Result<(usize, usize)> {
        let inv = self.inverse.as_ref().ok_or_else(|| Error::State("inverse models not trained".into()))?;
        // states without predecessors are treated as having stayed put
        Ok(inv.step_back(k, *s_next, rng).unwrap_or((0, *s_next)))
    }
}

impl TrainableBackend for TabularBackend {
    fn seed_transitions(&self) -> Vec<(usize, usize, usize)> {
        Vec::new()
    }

    fn refresh_policy(&mut self, theta: &[f64], horizon: usize, _rng: &mut SimRng) -> Result<()> {
        let rewards = self.features.rewards(&RewardParams::new(theta.to_vec())?);
        self.policy = Some(boltzmann_policy(&soft_value_iteration_rewards(&self.mdp, &rewards, horizon)));
        Ok(())
    }

    fn refresh_inverse(&mut self, _replay: &ReplayBuffer<usize, usize>, _horizon: usize, _rng: &mut SimRng) -> Result<()> {
        let policy = self.policy.as_ref().ok_or_else(|| Error::State("forward policy not trained".into()))?;
        self.inverse = Some(match self.prior {
            InversePrior::Uniform => TabularInverse::from_policy(&self.mdp, policy, &StatePrior::Uniform),
            InversePrior::Exact => TabularInverse::exact(&self.mdp, policy),
        });
        Ok(())
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Option<usize> {
        Some(sample_index(self.mdp.initial_dist(), rng))
    }
}
