//! Interaction datasets `D` of simulator transitions.
//!
//! On disk a dataset is line-delimited JSON: a header line
//! `{"version":1,"env":..,"source":..,"state_dim":..,"action_dim":..,"count":..}`
//! followed by one `{"s":[..],"a":[..],"next":[..]}` record per transition.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::continuous::{ContinuousEnv, Controller, EnvName, Scripted};
use crate::error::{Error, Result};
use crate::util::SimRng;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    RandomRollouts,
    /// Half random rollouts, half rollouts of a scripted expert.
    ExpertMixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    env: EnvName,
    source: DatasetSource,
    state_dim: usize,
    action_dim: usize,
    count: usize,
}

/// Transitions that all replay exactly in the simulator they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    env: EnvName,
    source: DatasetSource,
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
}

impl InteractionDataset {
    pub fn new(env: &ContinuousEnv, source: DatasetSource) -> Self {
        Self {
            env: env.name(),
            source,
            state_dim: env.state_dim(),
            action_dim: env.action_dim(),
            transitions: Vec::new(),
        }
    }

    pub fn env(&self) -> EnvName {
        self.env
    }

    pub fn source(&self) -> DatasetSource {
        self.source
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Adds a transition after checking that the simulator reproduces it bitwise.
    pub fn push_checked(&mut self, env: &ContinuousEnv, t: Transition) -> Result<()> {
        if env.name() != self.env {
            return Err(Error::arg(format!("dataset for {} cannot check {} transitions", self.env, env.name())));
        }
        if t.s.len() != self.state_dim || t.next.len() != self.state_dim || t.a.len() != self.action_dim {
            return Err(Error::arg("transition dimensions do not match the dataset"));
        }
        if env.transition(&t.s, &t.a).state != t.next {
            return Err(Error::State(format!(
                "transition #{} does not replay in the simulator",
                self.transitions.len()
            )));
        }
        self.transitions.push(t);
        Ok(())
    }

    /// Every visited state (starts and successors) in insertion order.
    pub fn states(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.transitions.len());
        for t in &self.transitions {
            out.push(t.s.as_slice());
            out.push(t.next.as_slice());
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: FORMAT_VERSION,
            env: self.env,
            source: self.source,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            count: self.transitions.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for t in &self.transitions {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a dataset, re-checking every transition against `env`.
    pub fn read_jsonl<R: BufRead>(input: R, env: &ContinuousEnv) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::parse("dataset", "missing header"))??;
        let header: Header = serde_json::from_str(&first)?;
        if header.version != FORMAT_VERSION {
            return Err(Error::parse("dataset", format!("unsupported version {}", header.version)));
        }
        let mut ds = InteractionDataset {
            env: header.env,
            source: header.source,
            state_dim: header.state_dim,
            action_dim: header.action_dim,
            transitions: Vec::with_capacity(header.count),
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            ds.push_checked(env, serde_json::from_str(&line)?)?;
        }
        if ds.len() != header.count {
            return Err(Error::parse("dataset", format!("header promises {} records, found {}", header.count, ds.len())));
        }
        Ok(ds)
    }
}

/// Follows the expert, replacing its action by a uniform random one with
/// probability `random_prob`.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonExpert<'a, C: ?Sized> {
    pub expert: &'a C,
    pub random_prob: f64,
}

impl<C: Controller + ?Sized> Controller for EpsilonExpert<'_, C> {
    fn act(&self, env: &ContinuousEnv, s: &[f64], rng: &mut SimRng) -> Vec<f64> {
        if rng.random::<f64>() < self.random_prob {
            Scripted::Random.act(env, s, rng)
        } else {
            self.expert.act(env, s, rng)
        }
    }
}

/// Probability of a random action in the expert half of a mixed dataset.
pub const EXPERT_RANDOM_PROB: f64 = 0.2;

/// Collects `num_rollouts` rollouts of at most `rollout_len` steps. Random
/// rollouts use uniform actions; the mixed source alternates them with the
/// scripted pendulum balancer (only defined for the pendulum).
pub fn collect_dataset(
    env: &ContinuousEnv,
    source: DatasetSource,
    num_rollouts: usize,
    rollout_len: usize,
    rng: &mut SimRng,
) -> Result<InteractionDataset> {
    let expert = EpsilonExpert {
        expert: &Scripted::Balancer,
        random_prob: EXPERT_RANDOM_PROB,
    };
    let behaviors: Vec<&dyn Controller> = match source {
        DatasetSource::RandomRollouts => vec![&Scripted::Random],
        DatasetSource::ExpertMixed => {
            if env.name() != EnvName::Pendulum {
                return Err(Error::arg("the expert-mixed dataset is only defined for the pendulum"));
            }
            vec![&Scripted::Random, &expert]
        }
    };
    collect_with(env, &behaviors, source, num_rollouts, rollout_len, rng)
}

/// Rollout `i` follows `behaviors[i % behaviors.len()]`.
pub fn collect_with(
    env: &ContinuousEnv,
    behaviors: &[&dyn Controller],
    source: DatasetSource,
    num_rollouts: usize,
    rollout_len: usize,
    rng: &mut SimRng,
) -> Result<InteractionDataset> {
    if behaviors.is_empty() {
        return Err(Error::arg("at least one behavior policy is required"));
    }
    let mut ds = InteractionDataset::new(env, source);
    for i in 0..num_rollouts {
        let policy = behaviors[i % behaviors.len()];
        let mut s = env.sample_initial(rng);
        for _ in 0..rollout_len {
            let a: Vec<f64> = policy.act(env, &s, rng).iter().map(|x| x.clamp(-1.0, 1.0)).collect();
            let step = env.transition(&s, &a);
            ds.push_checked(
                env,
                Transition {
                    s,
                    a,
                    next: step.state.clone(),
                },
            )?;
            s = step.state;
            if step.terminated {
                break;
            }
        }
    }
    Ok(ds)
}
