//! Declarative experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continuous::{EnvName, SoftQConfig};
use crate::deep::{ContinuousBackendConfig, DeepRlspConfig};
use crate::error::{Error, Result};
use crate::nn::{ApproximatorConfig, MixtureDensityHead};
use crate::tabular::CaseName;

/// Environment variable that replaces the configured seed list with one seed.
pub const SEED_ENV_VAR: &str = "RLSP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RlspExact,
    DeepRlsp,
    AverageFeatures,
    Waypoints,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::RlspExact, Method::DeepRlsp, Method::AverageFeatures, Method::Waypoints];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RlspExact => "rlsp_exact",
            Method::DeepRlsp => "deep_rlsp",
            Method::AverageFeatures => "average_features",
            Method::Waypoints => "waypoints",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::arg(format!("unknown profile '{s}'"))),
        }
    }
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

/// Either a gridworld case or a continuous environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Gridworld(CaseName),
    Continuous(EnvName),
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(c) = s.parse::<CaseName>() {
            return Ok(EnvKind::Gridworld(c));
        }
        s.parse::<EnvName>()
            .map(EnvKind::Continuous)
            .map_err(|_| Error::arg(format!("unknown environment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub method: Method,
    #[serde(default = "default_states")]
    pub num_observed_states: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_states() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_profile() -> Profile {
    Profile::Desk
}

impl ExperimentConfig {
    pub fn new(env: &str, method: Method) -> Self {
        Self {
            env: env.to_string(),
            method,
            num_observed_states: default_states(),
            seeds: default_seeds(),
            profile: default_profile(),
            output_dir: None,
        }
    }

    /// Parses a TOML document with the same fields.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::parse("experiment config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        self.env.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.env_kind()?;
        if self.num_observed_states == 0 {
            return Err(Error::Config("num_observed_states must be at least 1".into()));
        }
        if self.method == Method::RlspExact && matches!(kind, EnvKind::Continuous(_)) {
            return Err(Error::Config("rlsp_exact requires a tabular environment".into()));
        }
        if matches!(kind, EnvKind::Gridworld(_)) && self.num_observed_states != 1 {
            return Err(Error::Config("gridworld cases have exactly one observed state".into()));
        }
        Ok(())
    }

    /// Seeds after applying the override variable, if set.
    pub fn effective_seeds(&self) -> Result<Vec<u64>> {
        match std::env::var(SEED_ENV_VAR) {
            Ok(v) => {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV_VAR} must be an unsigned integer, got '{v}'")))?;
                Ok(vec![seed])
            }
            Err(_) => Ok(self.seeds.clone()),
        }
    }
}

/// Every budget and model size used by a continuous run.
#[derive(Debug, Clone)]
pub struct ProfileSettings {
    pub dataset_rollouts: usize,
    pub dataset_rollout_len: usize,
    pub encoder: ApproximatorConfig,
    pub latent_dim: usize,
    pub kl_weight: f64,
    pub inverse_dynamics: ApproximatorConfig,
    /// Policy optimizer used to train the expert on the true reward.
    pub expert_policy: SoftQConfig,
    /// In-loop policy refreshes and inverse-policy training.
    pub backend: ContinuousBackendConfig,
    /// Final optimization of the inferred reward: budget = multiplier × in-loop budget.
    pub final_budget_multiplier: usize,
    pub final_policy: SoftQConfig,
    pub deep: DeepRlspConfig,
    pub eval_episodes: usize,
    /// Expert steps skipped at the start of each episode when sampling observed states.
    pub burn_in: usize,
}

impl ProfileSettings {
    pub fn new(profile: Profile, env: EnvName) -> Self {
        let mut s = match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        };
        // the policy is re-initialized every iteration on the pendulum only
        s.backend.reinit_policy = env == EnvName::Pendulum;
        if env == EnvName::Pendulum {
            // 20k steps balance for only about half an episode
            s.expert_policy.budget = s.expert_policy.budget.max(40_000);
        }
        s
    }

    fn desk() -> Self {
        let inloop = SoftQConfig {
            budget: 2000,
            hidden: vec![32, 32],
            ..SoftQConfig::default()
        };
        Self {
            dataset_rollouts: 200,
            dataset_rollout_len: 100,
            encoder: ApproximatorConfig {
                epochs: 10,
                ..ApproximatorConfig::encoder_desk()
            },
            latent_dim: 8,
            kl_weight: 0.001,
            inverse_dynamics: ApproximatorConfig {
                epochs: 10,
                ..ApproximatorConfig::regressor_desk()
            },
            expert_policy: SoftQConfig {
                budget: 20_000,
                ..SoftQConfig::default()
            },
            backend: ContinuousBackendConfig {
                policy: inloop,
                reinit_policy: false,
                inverse_policy: ApproximatorConfig {
                    epochs: 10,
                    ..ApproximatorConfig::density_desk()
                },
                head: MixtureDensityHead::default(),
                inverse_samples: 2000,
                eval_episodes: 0,
            },
            final_budget_multiplier: 10,
            final_policy: SoftQConfig::default(),
            deep: DeepRlspConfig::default(),
            eval_episodes: 20,
            burn_in: 10,
        }
    }

    fn paper() -> Self {
        let desk = Self::desk();
        Self {
            dataset_rollouts: 1000,
            encoder: ApproximatorConfig::encoder_paper(),
            latent_dim: 30,
            inverse_dynamics: ApproximatorConfig::regressor_paper(),
            expert_policy: SoftQConfig {
                budget: 200_000,
                hidden: vec![256, 256],
                ..SoftQConfig::default()
            },
            backend: ContinuousBackendConfig {
                policy: SoftQConfig {
                    budget: 10_000,
                    hidden: vec![256, 256],
                    ..SoftQConfig::default()
                },
                inverse_policy: ApproximatorConfig::density_paper(),
                inverse_samples: 10_000,
                ..desk.backend
            },
            final_policy: SoftQConfig {
                hidden: vec![256, 256],
                ..SoftQConfig::default()
            },
            ..desk
        }
    }

    pub fn final_policy_config(&self) -> SoftQConfig {
        SoftQConfig {
            budget: self.final_budget_multiplier * self.backend.policy.budget,
            ..self.final_policy.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_and_rejects_bad_combinations() {
        let cfg = ExperimentConfig::parse("env = \"pendulum\"\nmethod = \"deep_rlsp\"\nnum_observed_states = 10\n").unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.profile, Profile::Desk);
        assert!(ExperimentConfig::parse("env = \"pendulum\"\nmethod = \"rlsp_exact\"\n").is_err());
        assert!(ExperimentConfig::parse("env = \"room_vase\"\nmethod = \"rlsp_exact\"\n").is_ok());
        assert!(ExperimentConfig::parse("env = \"nowhere\"\nmethod = \"deep_rlsp\"\n").is_err());
        assert!(ExperimentConfig::parse("env = \"pendulum\"\nmethod = \"deep_rlsp\"\ncolour = 1\n").is_err());
    }

    #[test]
    fn final_budget_is_a_multiple_of_the_inner_budget() {
        let s = ProfileSettings::new(Profile::Desk, EnvName::Pendulum);
        assert_eq!(s.final_policy_config().budget, 10 * s.backend.policy.budget);
        assert!(s.backend.reinit_policy);
        assert!(!ProfileSettings::new(Profile::Desk, EnvName::RunnerForward).backend.reinit_policy);
    }
}
