//! Reward inference from observed environment states.
//!
//! The crate provides exact inference on tabular MDPs (soft value iteration,
//! exact state-likelihood gradients), the sampled backward/forward estimator
//! with learned inverse models, built-in gridworld and continuous-control
//! environments, and the experiment harness used by the `rlsp` CLI.

pub mod continuous;
pub mod deep;
pub mod error;
pub mod harness;
pub mod models;
pub mod nn;
pub mod planning;
pub mod rlsp;
pub mod tabular;
pub mod util;

pub use error::{Error, Result};
pub use planning::{Direction, Trajectory};
pub use tabular::{FeatureMap, RewardParams, TabularMdp};
