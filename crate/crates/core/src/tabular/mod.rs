//! Tabular MDPs and the built-in gridworld cases.

mod gridworld;
mod mdp;

pub use gridworld::{build_gridworld, load_layout, CaseName, Gridworld, GridworldCase, Layout, WorldState};
pub use mdp::{FeatureMap, RewardParams, TabularMdp};
