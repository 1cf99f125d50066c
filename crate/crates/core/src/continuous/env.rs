//! Deterministic continuous-control environments.
//!
//! `pendulum` is a cart-pole whose pole stays down once it reaches the fall
//! angle. `runner_*` is a point mass with linear drag. `hopper_lite_*` is a
//! point mass on a spring leg: thrust stiffens the leg, horizontal pushes only
//! act while the leg touches the ground and weaken its support.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_CONSTANTS: &str = include_str!("../../assets/envs/constants.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Pendulum,
    RunnerForward,
    RunnerBackward,
    HopperLiteTerminate,
    HopperLitePenalty,
}

impl EnvName {
    pub const ALL: [EnvName; 5] = [
        EnvName::Pendulum,
        EnvName::RunnerForward,
        EnvName::RunnerBackward,
        EnvName::HopperLiteTerminate,
        EnvName::HopperLitePenalty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "pendulum",
            EnvName::RunnerForward => "runner_forward",
            EnvName::RunnerBackward => "runner_backward",
            EnvName::HopperLiteTerminate => "hopper_lite_terminate",
            EnvName::HopperLitePenalty => "hopper_lite_penalty",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown continuous environment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConstants {
    pub dt: f64,
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub max_force: f64,
    pub x_limit: f64,
    pub max_cart_speed: f64,
    pub max_pole_speed: f64,
    pub upright_angle: f64,
    pub fall_angle: f64,
    pub init_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConstants {
    pub dt: f64,
    pub max_force: f64,
    pub drag: f64,
    pub init_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopperConstants {
    pub dt: f64,
    pub gravity: f64,
    pub leg_length: f64,
    pub stiffness: f64,
    pub thrust_gain: f64,
    pub push_cost: f64,
    pub contact_damping: f64,
    pub push_force: f64,
    pub drag: f64,
    pub fall_height: f64,
    pub alive_bonus: f64,
    pub max_speed: f64,
    pub init_height: f64,
    pub init_noise: f64,
}

/// Versioned physics constants for every built-in environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConstants {
    pub version: u32,
    pub episode_len: usize,
    pub pendulum: PendulumConstants,
    pub runner: RunnerConstants,
    pub hopper: HopperConstants,
}

impl EnvConstants {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CONSTANTS).expect("built-in constants parse")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: EnvConstants = toml::from_str(text).map_err(|e| Error::parse("env constants", e.to_string()))?;
        if c.version != 1 {
            return Err(Error::parse("env constants", format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }
}

/// Result of one simulator step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
}

/// A continuous environment with direct simulator access.
///
/// [`ContinuousEnv::transition`] is a pure function of `(state, action)`; the
/// `reset`/`set_state`/`step` methods wrap it with a current state.
#[derive(Debug, Clone)]
pub struct ContinuousEnv {
    name: EnvName,
    consts: EnvConstants,
    state: Vec<f64>,
}

pub fn make_env(name: &str) -> Result<ContinuousEnv> {
    Ok(ContinuousEnv::new(name.parse()?))
}

impl ContinuousEnv {
    pub fn new(name: EnvName) -> Self {
        Self::with_constants(name, EnvConstants::builtin())
    }

    pub fn with_constants(name: EnvName, consts: EnvConstants) -> Self {
        let dim = match name {
            EnvName::Pendulum | EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => 4,
            EnvName::RunnerForward | EnvName::RunnerBackward => 2,
        };
        Self {
            name,
            consts,
            state: vec![0.0; dim],
        }
    }

    pub fn name(&self) -> EnvName {
        self.name
    }

    pub fn constants(&self) -> &EnvConstants {
        &self.consts
    }

    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    pub fn action_dim(&self) -> usize {
        match self.name {
            EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => 2,
            _ => 1,
        }
    }

    /// Every action component lies in `[-1, 1]`.
    pub fn action_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.action_dim()]
    }

    pub fn episode_len(&self) -> usize {
        self.consts.episode_len
    }

    /// Observation seen by policies and feature learners. Horizontal
    /// positions of the runner and hopper are left out, so observations stay
    /// bounded; the pendulum observes its full state.
    pub fn observe(&self, s: &[f64]) -> Vec<f64> {
        match self.name {
            EnvName::Pendulum => s.to_vec(),
            EnvName::RunnerForward | EnvName::RunnerBackward => vec![s[1]],
            EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => vec![s[1], s[2], s[3]],
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self.name {
            EnvName::Pendulum => 4,
            EnvName::RunnerForward | EnvName::RunnerBackward => 1,
            EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => 3,
        }
    }

    /// Per-dimension range every reachable state stays in under actions in
    /// the bounds. Horizontal positions of the runner and hopper are unbounded.
    pub fn state_bounds(&self) -> Vec<(f64, f64)> {
        let sym = |v: f64| (-v, v);
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        match self.name {
            EnvName::Pendulum => {
                let c = &self.consts.pendulum;
                vec![sym(c.x_limit), sym(c.max_cart_speed), sym(c.fall_angle), sym(c.max_pole_speed)]
            }
            EnvName::RunnerForward | EnvName::RunnerBackward => {
                let c = &self.consts.runner;
                // the terminal velocity, or the initial one if that is larger
                vec![free, sym((c.max_force / c.drag).max(c.init_noise))]
            }
            EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => {
                let c = &self.consts.hopper;
                // rising at max_speed from the leg length, plus one step of slack
                let apex = c.leg_length + c.max_speed * c.max_speed / (2.0 * c.gravity) + c.dt * c.max_speed;
                vec![free, (0.0, apex), sym(c.max_speed), sym(c.max_speed)]
            }
        }
    }

    /// Draws a start state from the initial-state distribution.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut u = |scale: f64| scale * (2.0 * rng.random::<f64>() - 1.0);
        match self.name {
            EnvName::Pendulum => {
                let n = self.consts.pendulum.init_noise;
                vec![u(n), u(n), u(n), u(n)]
            }
            EnvName::RunnerForward | EnvName::RunnerBackward => vec![0.0, u(self.consts.runner.init_noise)],
            EnvName::HopperLiteTerminate | EnvName::HopperLitePenalty => {
                let h = &self.consts.hopper;
                vec![0.0, h.init_height + u(h.init_noise), 0.0, u(h.init_noise)]
            }
        }
    }

    /// Whether the pendulum pole is within the upright band.
    pub fn is_upright(&self, s: &[f64]) -> bool {
        self.name == EnvName::Pendulum && s[2].abs() < self.consts.pendulum.upright_angle
    }

    /// Deterministic simulator step; actions are clipped to the bounds.
    pub fn transition(&self, s: &[f64], a: &[f64]) -> Step {
        debug_assert_eq!(s.len(), self.state_dim());
        let a: Vec<f64> = a.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        match self.name {
            EnvName::Pendulum => self.pendulum_step(s, a[0]),
            EnvName::RunnerForward => self.runner_step(s, a[0], 1.0),
            EnvName::RunnerBackward => self.runner_step(s, a[0], -1.0),
            EnvName::HopperLiteTerminate => self.hopper_step(s, a[0], a[1], true),
            EnvName::HopperLitePenalty => self.hopper_step(s, a[0], a[1], false),
        }
    }

    fn pendulum_step(&self, s: &[f64], a: f64) -> Step {
        let c = &self.consts.pendulum;
        let (mut x, mut xd, mut th, mut thd) = (s[0], s[1], s[2], s[3]);
        let force = c.max_force * a;
        let total = c.cart_mass + c.pole_mass;
        let fallen = th.abs() >= c.fall_angle;
        let xdd = if fallen {
            force / total
        } else {
            let (sin, cos) = th.sin_cos();
            let tmp = (force + c.pole_mass * c.half_length * thd * thd * sin) / total;
            let thdd = (c.gravity * sin - cos * tmp)
                / (c.half_length * (4.0 / 3.0 - c.pole_mass * cos * cos / total));
            thd = (thd + c.dt * thdd).clamp(-c.max_pole_speed, c.max_pole_speed);
            th += c.dt * thd;
            tmp - c.pole_mass * c.half_length * thdd * cos / total
        };
        xd = (xd + c.dt * xdd).clamp(-c.max_cart_speed, c.max_cart_speed);
        x += c.dt * xd;
        if x.abs() > c.x_limit {
            x = x.signum() * c.x_limit;
            xd = 0.0;
        }
        if th.abs() >= c.fall_angle {
            th = th.signum() * c.fall_angle;
            thd = 0.0;
        }
        let reward = if th.abs() < c.upright_angle { 1.0 } else { 0.0 };
        Step {
            state: vec![x, xd, th, thd],
            reward,
            terminated: false,
        }
    }

    fn runner_step(&self, s: &[f64], a: f64, direction: f64) -> Step {
        let c = &self.consts.runner;
        let v = s[1] + c.dt * (c.max_force * a - c.drag * s[1]);
        Step {
            state: vec![s[0] + c.dt * v, v],
            reward: direction * v,
            terminated: false,
        }
    }

    fn hopper_step(&self, s: &[f64], push: f64, thrust: f64, terminate: bool) -> Step {
        let c = &self.consts.hopper;
        let (x, z, xd, zd) = (s[0], s[1], s[2], s[3]);
        let contact = z < c.leg_length;
        let (xdd, zdd) = if contact {
            let support = 1.0 + c.thrust_gain * thrust - c.push_cost * push.abs();
            let spring = c.stiffness * (c.leg_length - z) * support;
            (c.push_force * push - c.drag * xd, spring - c.gravity - c.contact_damping * zd)
        } else {
            (-c.drag * xd, -c.gravity)
        };
        let xd = (xd + c.dt * xdd).clamp(-c.max_speed, c.max_speed);
        let mut zd = (zd + c.dt * zdd).clamp(-c.max_speed, c.max_speed);
        let mut z = z + c.dt * zd;
        if z < 0.0 {
            z = 0.0;
            zd = 0.0;
        }
        let fallen = z < c.fall_height;
        let reward = xd + if fallen { if terminate { 0.0 } else { -1.0 } } else { c.alive_bonus };
        Step {
            state: vec![x + c.dt * xd, z, xd, zd],
            reward,
            terminated: terminate && fallen,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.state = self.sample_initial(rng);
        self.state.clone()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, s: &[f64]) -> Result<()> {
        if s.len() != self.state.len() || s.iter().any(|x| !x.is_finite()) {
            return Err(Error::State(format!("invalid {} state {s:?}", self.name)));
        }
        self.state.copy_from_slice(s);
        Ok(())
    }

    pub fn step(&mut self, a: &[f64]) -> Step {
        let out = self.transition(&self.state, a);
        self.state.clone_from(&out.state);
        out
    }
}
