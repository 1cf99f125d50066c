//! Exact inverse models for tabular MDPs, derived by Bayes' rule from a
//! forward policy, the transition table and a state prior.

use rand::Rng;

use crate::planning::PolicySchedule;
use crate::tabular::TabularMdp;
use crate::util::sample_index;

/// Prior over the previous state used when inverting the dynamics.
#[derive(Debug, Clone)]
pub enum StatePrior {
    /// Every state equally likely a priori.
    Uniform,
    /// Time-indexed marginals `p(s_k)`, e.g. the forward occupancy from a known start.
    Marginals(Vec<Vec<f64>>),
}

/// `p(s_k, a_k | s_{k+1}) ∝ prior_k(s_k) π_k(a_k|s_k) 𝒯(s_{k+1}|s_k, a_k)` for each `k`.
#[derive(Debug, Clone)]
pub struct TabularInverse {
    num_states: usize,
    /// `preds[k][s']` lists `(s, a, probability)`.
    preds: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

impl TabularInverse {
    pub fn from_policy(mdp: &TabularMdp, policy: &PolicySchedule, prior: &StatePrior) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut preds = Vec::with_capacity(policy.horizon());
        for k in 0..policy.horizon() {
            let mut table: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); ns];
            for s in 0..ns {
                let p_s = match prior {
                    StatePrior::Uniform => 1.0,
                    StatePrior::Marginals(m) => m[k.min(m.len() - 1)][s],
                };
                if p_s == 0.0 {
                    continue;
                }
                let pi = policy.row(k, s);
                for a in 0..na {
                    for &(next, p) in mdp.successors(s, a) {
                        let w = p_s * pi[a] * p;
                        if w > 0.0 {
                            table[next].push((s, a, w));
                        }
                    }
                }
            }
            for row in &mut table {
                let total: f64 = row.iter().map(|e| e.2).sum();
                for e in row.iter_mut() {
                    e.2 /= total;
                }
            }
            preds.push(table);
        }
        Self { num_states: ns, preds }
    }

    /// Inverse models that reproduce the exact posterior over trajectories
    /// from `mdp.initial_dist()` under `policy`.
    pub fn exact(mdp: &TabularMdp, policy: &PolicySchedule) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut marginals = vec![mdp.initial_dist().to_vec()];
        for k in 0..policy.horizon() {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let mass = marginals[k][s];
                if mass == 0.0 {
                    continue;
                }
                let pi = policy.row(k, s);
                for a in 0..na {
                    for &(n, p) in mdp.successors(s, a) {
                        next[n] += mass * pi[a] * p;
                    }
                }
            }
            marginals.push(next);
        }
        Self::from_policy(mdp, policy, &StatePrior::Marginals(marginals))
    }

    pub fn horizon(&self) -> usize {
        self.preds.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Predecessor distribution of `s_next` at time `k` (clamped to the last step).
    pub fn distribution(&self, k: usize, s_next: usize) -> &[(usize, usize, f64)] {
        &self.preds[k.min(self.preds.len() - 1)][s_next]
    }

    /// Samples `(a_prev, s_prev)`; `None` when `s_next` has no predecessor.
    pub fn step_back<R: Rng + ?Sized>(&self, k: usize, s_next: usize, rng: &mut R) -> Option<(usize, usize)> {
        let dist = self.distribution(k, s_next);
        if dist.is_empty() {
            return None;
        }
        let weights: Vec<f64> = dist.iter().map(|e| e.2).collect();
        let (s, a, _) = dist[sample_index(&weights, rng)];
        Some((a, s))
    }
}
