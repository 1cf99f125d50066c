//! Horizon curriculum for the backward/forward simulation length.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub horizon_t: usize,
    /// 1-based index of the gradient step being taken at the current horizon.
    pub steps_at_t: usize,
    pub grad_norm_threshold: f64,
    pub max_steps_per_t: usize,
    pub max_t: usize,
    /// Set once the step at `max_t` has met an advance condition.
    pub finished: bool,
}

impl CurriculumState {
    pub fn new(grad_norm_threshold: f64, max_steps_per_t: usize, max_t: usize) -> Self {
        Self {
            horizon_t: 1,
            steps_at_t: 1,
            grad_norm_threshold,
            max_steps_per_t,
            max_t: max_t.max(1),
            finished: false,
        }
    }

    /// True when a step with this gradient norm moves to the next horizon.
    pub fn should_advance(&self, grad_norm: f64) -> bool {
        grad_norm < self.grad_norm_threshold || self.steps_at_t >= self.max_steps_per_t
    }
}

/// Moves to the next horizon when the gradient is small or the step budget at
/// this horizon is spent; otherwise counts the step.
pub fn curriculum_advance(cs: &CurriculumState, grad_norm: f64) -> CurriculumState {
    let mut next = cs.clone();
    if cs.finished {
        return next;
    }
    if cs.should_advance(grad_norm) {
        if cs.horizon_t >= cs.max_t {
            next.finished = true;
        } else {
            next.horizon_t += 1;
        }
        next.steps_at_t = 1;
    } else {
        next.steps_at_t += 1;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gradient_advances() {
        let cs = CurriculumState::new(2.0, 10, 10);
        let n = curriculum_advance(&cs, 1.9);
        assert_eq!((n.horizon_t, n.steps_at_t), (2, 1));
    }

    #[test]
    fn step_budget_advances() {
        let cs = CurriculumState {
            steps_at_t: 10,
            ..CurriculumState::new(2.0, 10, 10)
        };
        assert_eq!(curriculum_advance(&cs, 5.0).horizon_t, 2);
    }

    #[test]
    fn otherwise_only_counts() {
        let cs = CurriculumState {
            steps_at_t: 3,
            ..CurriculumState::new(2.0, 10, 10)
        };
        let n = curriculum_advance(&cs, 5.0);
        assert_eq!((n.horizon_t, n.steps_at_t), (1, 4));
    }

    #[test]
    fn finishes_at_max() {
        let mut cs = CurriculumState::new(2.0, 10, 3);
        let mut steps = 0;
        while !cs.finished {
            cs = curriculum_advance(&cs, 5.0);
            steps += 1;
            assert!(cs.horizon_t <= 3);
        }
        assert_eq!(steps, 30);
    }
}
