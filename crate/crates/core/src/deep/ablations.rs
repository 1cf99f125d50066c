//! Rewards built directly from observed-state features, with no backward simulation.

use log::warn;

use crate::error::{Error, Result};
use crate::tabular::RewardParams;
use crate::util::{dot, norm};

/// θ = mean_i φ(s₀ⁱ), normalized to unit length.
pub fn average_features_reward(observed_features: &[Vec<f64>]) -> Result<RewardParams> {
    let first = observed_features
        .first()
        .ok_or_else(|| Error::arg("at least one observed state is required"))?;
    let mut mean = vec![0.0; first.len()];
    for phi in observed_features {
        if phi.len() != mean.len() {
            return Err(Error::arg("feature vectors differ in length"));
        }
        for (m, x) in mean.iter_mut().zip(phi) {
            *m += x / observed_features.len() as f64;
        }
    }
    let n = norm(&mean);
    if n == 0.0 {
        return Err(Error::ZeroFeatures("mean observed feature vector is zero".into()));
    }
    RewardParams::new(mean.into_iter().map(|m| m / n).collect())
}

/// `R(s) = max_i ⟨φ(s₀ⁱ)/‖φ(s₀ⁱ)‖, φ(s)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointsReward {
    waypoints: Vec<Vec<f64>>,
}

impl WaypointsReward {
    pub fn waypoints(&self) -> &[Vec<f64>] {
        &self.waypoints
    }

    pub fn reward(&self, phi: &[f64]) -> f64 {
        self.waypoints
            .iter()
            .map(|w| dot(w, phi))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the waypoint reward; zero feature vectors are dropped with a warning.
pub fn waypoints_reward(observed_features: &[Vec<f64>]) -> Result<WaypointsReward> {
    let mut waypoints = Vec::with_capacity(observed_features.len());
    for (i, phi) in observed_features.iter().enumerate() {
        let n = norm(phi);
        if n == 0.0 {
            warn!("waypoint {i} has a zero feature vector and is dropped");
            continue;
        }
        waypoints.push(phi.iter().map(|x| x / n).collect());
    }
    if waypoints.is_empty() {
        return Err(Error::ZeroFeatures("every waypoint has a zero feature vector".into()));
    }
    Ok(WaypointsReward { waypoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_is_normalized_features() {
        let theta = average_features_reward(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(theta.weights(), &[0.6, 0.8]);
    }

    #[test]
    fn opposite_features_cancel() {
        let r = average_features_reward(&[vec![1.0, -2.0], vec![-1.0, 2.0]]);
        assert!(matches!(r, Err(Error::ZeroFeatures(_))));
    }

    #[test]
    fn waypoint_self_value_is_norm() {
        let w = waypoints_reward(&[vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        assert!((w.reward(&[3.0, 4.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_waypoint_matches_average_features() {
        let phi = vec![vec![1.0, 2.0, -1.0]];
        let w = waypoints_reward(&phi).unwrap();
        let af = average_features_reward(&phi).unwrap();
        for probe in [[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]] {
            assert!((w.reward(&probe) - af.reward(&probe)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_waypoints_are_dropped() {
        let w = waypoints_reward(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(w.waypoints().len(), 1);
    }
}
