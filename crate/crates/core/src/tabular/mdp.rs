//! Finite-horizon tabular MDPs, feature maps and linear reward parameters.

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

/// A finite MDP with sparse transition rows.
///
/// Row `s * num_actions + a` lists `(next_state, probability)` pairs with
/// strictly positive probabilities.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Vec<(usize, f64)>>,
    initial_dist: Vec<f64>,
    horizon: usize,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        initial_dist: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::arg("MDP needs at least one state and one action"));
        }
        if horizon == 0 {
            return Err(Error::arg("horizon must be at least 1"));
        }
        if transitions.len() != num_states * num_actions {
            return Err(Error::arg(format!(
                "expected {} transition rows, got {}",
                num_states * num_actions,
                transitions.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(transitions.len());
        for (idx, row) in transitions.into_iter().enumerate() {
            let mut total = 0.0;
            let mut kept: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (next, p) in row {
                if next >= num_states {
                    return Err(Error::arg(format!("row {idx}: next state {next} out of range")));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::arg(format!("row {idx}: invalid probability {p}")));
                }
                total += p;
                if p > 0.0 {
                    match kept.iter_mut().find(|(s, _)| *s == next) {
                        Some(entry) => entry.1 += p,
                        None => kept.push((next, p)),
                    }
                }
            }
            if (total - 1.0).abs() > ROW_TOL {
                return Err(Error::arg(format!(
                    "row {idx} (state {}, action {}) sums to {total}",
                    idx / num_actions,
                    idx % num_actions
                )));
            }
            kept.sort_by_key(|(s, _)| *s);
            cleaned.push(kept);
        }
        validate_distribution(&initial_dist, num_states, "initial distribution")?;
        Ok(Self {
            num_states,
            num_actions,
            transitions: cleaned,
            initial_dist,
            horizon,
        })
    }

    /// Builds an MDP from dense rows indexed `[s][a][s']`.
    pub fn from_dense(rows: &[Vec<Vec<f64>>], initial_dist: Vec<f64>, horizon: usize) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        let mut transitions = Vec::with_capacity(num_states * num_actions);
        for (s, per_action) in rows.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::arg(format!("state {s} has {} actions", per_action.len())));
            }
            for dist in per_action {
                if dist.len() != num_states {
                    return Err(Error::arg(format!("state {s}: row length {}", dist.len())));
                }
                transitions.push(
                    dist.iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .map(|(i, p)| (i, *p))
                        .collect(),
                );
            }
        }
        Self::new(num_states, num_actions, transitions, initial_dist, horizon)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Same dynamics with a different horizon or initial distribution.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::arg("horizon must be at least 1"));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }

    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self> {
        validate_distribution(&initial_dist, self.num_states, "initial distribution")?;
        let mut out = self.clone();
        out.initial_dist = initial_dist;
        Ok(out)
    }

    /// Sparse successor list for `(s, a)`.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.num_actions + a]
    }

    /// Dense transition row for `(s, a)`.
    pub fn step_dist(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_state(s)?;
        if a >= self.num_actions {
            return Err(Error::arg(format!("action {a} out of range ({} actions)", self.num_actions)));
        }
        let mut row = vec![0.0; self.num_states];
        for &(next, p) in self.successors(s, a) {
            row[next] = p;
        }
        Ok(row)
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::arg(format!("state {s} out of range ({} states)", self.num_states)));
        }
        Ok(())
    }

    /// True if every transition row is one-hot.
    pub fn is_deterministic(&self) -> bool {
        self.transitions.iter().all(|row| row.len() == 1)
    }
}

fn validate_distribution(dist: &[f64], len: usize, what: &str) -> Result<()> {
    if dist.len() != len {
        return Err(Error::arg(format!("{what} has length {}, expected {len}", dist.len())));
    }
    if dist.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::arg(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::arg(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Eagerly tabulated feature function φ over state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    names: Vec<String>,
    table: Vec<f64>,
}

impl FeatureMap {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let names = (0..dim).map(|i| format!("f{i}")).collect();
        Self::with_names(rows, names)
    }

    pub fn with_names(rows: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        let dim = names.len();
        if dim == 0 {
            return Err(Error::arg("feature dimension must be positive"));
        }
        let mut table = Vec::with_capacity(rows.len() * dim);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::arg(format!("state {s}: feature length {} != {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("state {s}: non-finite feature")));
            }
            table.extend_from_slice(row);
        }
        Ok(Self { dim, names, table })
    }

    /// Tabulates `f` over `num_states` states.
    pub fn tabulate(num_states: usize, names: Vec<String>, f: impl Fn(usize) -> Vec<f64>) -> Result<Self> {
        Self::with_names((0..num_states).map(f).collect(), names)
    }

    #[inline]
    pub fn eval(&self, s: usize) -> &[f64] {
        &self.table[s * self.dim..(s + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.table.len() / self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-state linear reward θᵀφ(s).
    pub fn rewards(&self, theta: &RewardParams) -> Vec<f64> {
        (0..self.num_states())
            .map(|s| crate::util::dot(self.eval(s), theta.weights()))
            .collect()
    }
}

/// Linear reward weights θ.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RewardParams(Vec<f64>);

impl RewardParams {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("reward weights must be finite".into()));
        }
        Ok(Self(weights))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        crate::util::norm(&self.0)
    }

    /// Unit-norm copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            Self(self.0.iter().map(|w| w / n).collect())
        }
    }

    pub fn reward(&self, phi: &[f64]) -> f64 {
        crate::util::dot(&self.0, phi)
    }

    /// `self + scale * other`.
    pub fn combine(&self, other: &RewardParams, scale: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::arg("reward dimensions differ"));
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + scale * b).collect()))
    }
}
