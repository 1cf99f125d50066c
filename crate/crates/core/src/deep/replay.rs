//! Bounded FIFO of simulator-labeled transitions.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<S, A> {
    capacity: usize,
    items: VecDeque<(S, A, S)>,
}

/// Outcome of re-simulating a sample of stored transitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub checked: usize,
    pub passed: usize,
}

impl AuditReport {
    pub fn merge(&mut self, other: AuditReport) {
        self.checked += other.checked;
        self.passed += other.passed;
    }

    pub fn all_passed(&self) -> bool {
        self.checked == self.passed
    }
}

impl<S: Clone, A: Clone> ReplayBuffer<S, A> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `(s, a, step(s, a))`, labeling the next state with the true simulator.
    pub fn push_relabeled(&mut self, s: S, a: A, step: impl FnOnce(&S, &A) -> S) {
        let next = step(&s, &a);
        self.push(s, a, next);
    }

    /// Stores a transition whose next state already came from the simulator.
    pub fn push(&mut self, s: S, a: A, next: S) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back((s, a, next));
    }

    pub fn get(&self, i: usize) -> Option<&(S, A, S)> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(S, A, S)> {
        self.items.iter()
    }

    /// Uniformly sampled transitions, with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&(S, A, S)> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }

    /// Re-simulates a `fraction` of the stored transitions (at least one) and
    /// counts exact matches.
    pub fn audit<R: Rng + ?Sized>(
        &self,
        fraction: f64,
        rng: &mut R,
        step: impl Fn(&S, &A) -> S,
        same: impl Fn(&S, &S) -> bool,
    ) -> AuditReport {
        if self.items.is_empty() {
            return AuditReport::default();
        }
        let n = ((self.items.len() as f64 * fraction).ceil() as usize).clamp(1, self.items.len());
        let mut report = AuditReport::default();
        for i in sample(rng, self.items.len(), n) {
            let (s, a, next) = &self.items[i];
            report.checked += 1;
            if same(&step(s, a), next) {
                report.passed += 1;
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2);
        for i in 0..3 {
            buf.push_relabeled(i, 1, |s, a| s + a);
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.get(0), Some(&(1, 1, 2)));
    }

    #[test]
    fn audit_detects_mislabeled_transition() {
        let mut buf = ReplayBuffer::new(10);
        buf.push(0, 1, 5);
        let mut rng = seeded_rng(0);
        let report = buf.audit(1.0, &mut rng, |s, a| s + a, |x, y| x == y);
        assert_eq!(report, AuditReport { checked: 1, passed: 0 });
    }
}
