//! Finite Markov decision primitives.
//!
//! A state is a pair `(s, z)` of an endogenous index and an exogenous index,
//! flattened row-major into `s * n_z + z`. Choosing action `a` in endogenous
//! state `s` moves the endogenous component to `successor(s, a)`; the exogenous
//! component follows the row-stochastic kernel `P(z, z')`.

use crate::error::{DpError, Result};

pub type StateIndex = usize;
pub type ActionIndex = usize;

/// Tolerance for kernel row sums.
pub const KERNEL_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    s_grid: Vec<f64>,
    z_grid: Vec<f64>,
    a_grid: Vec<f64>,
    feasible: Vec<bool>,
    successor: Vec<usize>,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    gamble_utility: Option<Vec<f64>>,
}

/// Incremental construction of a [`ModelSpec`]; every invariant is checked in [`ModelBuilder::build`].
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    s_grid: Vec<f64>,
    z_grid: Vec<f64>,
    a_grid: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    reward: Vec<Vec<Vec<f64>>>,
    feasible: Option<Vec<Vec<bool>>>,
    successor: Option<Vec<Vec<usize>>>,
    gamble_utility: Option<Vec<Vec<Vec<f64>>>>,
}

impl ModelBuilder {
    pub fn new(s_grid: Vec<f64>, z_grid: Vec<f64>, a_grid: Vec<f64>) -> Self {
        Self {
            s_grid,
            z_grid,
            a_grid,
            ..Default::default()
        }
    }

    /// Exogenous kernel, `kernel[z][z']`.
    pub fn kernel(mut self, kernel: Vec<Vec<f64>>) -> Self {
        self.kernel = kernel;
        self
    }

    /// Reward table, `reward[s][a][z]`.
    pub fn reward(mut self, reward: Vec<Vec<Vec<f64>>>) -> Self {
        self.reward = reward;
        self
    }

    /// Feasibility of each endogenous/action pair, `feasible[s][a]`, shared by every `z`.
    pub fn feasible(mut self, feasible: Vec<Vec<bool>>) -> Self {
        self.feasible = Some(feasible);
        self
    }

    /// Endogenous successor table, `successor[s][a]`. Defaults to `successor(s, a) = a`.
    pub fn successor(mut self, successor: Vec<Vec<usize>>) -> Self {
        self.successor = Some(successor);
        self
    }

    /// Aggregate gambling utility, `gamble[s][a][z]`.
    pub fn gamble_utility(mut self, gamble: Vec<Vec<Vec<f64>>>) -> Self {
        self.gamble_utility = Some(gamble);
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let n_s = self.s_grid.len();
        let n_z = self.z_grid.len();
        let n_a = self.a_grid.len();
        if n_s == 0 || n_z == 0 || n_a == 0 {
            return Err(DpError::InvalidModel("grids must be non-empty".to_string()));
        }

        if self.kernel.len() != n_z {
            return Err(DpError::InvalidModel(format!(
                "kernel has {} rows, expected {n_z}",
                self.kernel.len()
            )));
        }
        let mut kernel = Vec::with_capacity(n_z * n_z);
        for (z, row) in self.kernel.iter().enumerate() {
            if row.len() != n_z {
                return Err(DpError::InvalidModel(format!(
                    "kernel row {z} has {} entries, expected {n_z}",
                    row.len()
                )));
            }
            kernel.extend_from_slice(row);
        }

        let reward = flatten_sa_z("reward", &self.reward, n_s, n_a, n_z)?;
        let gamble_utility = match &self.gamble_utility {
            Some(g) => Some(flatten_sa_z("gamble_utility", g, n_s, n_a, n_z)?),
            None => None,
        };

        let mut feasible_sa = vec![true; n_s * n_a];
        if let Some(table) = &self.feasible {
            if table.len() != n_s {
                return Err(DpError::InvalidModel(format!(
                    "feasibility has {} rows, expected {n_s}",
                    table.len()
                )));
            }
            for (s, row) in table.iter().enumerate() {
                if row.len() != n_a {
                    return Err(DpError::InvalidModel(format!(
                        "feasibility row {s} has {} entries, expected {n_a}",
                        row.len()
                    )));
                }
                feasible_sa[s * n_a..(s + 1) * n_a].copy_from_slice(row);
            }
        }
        let mut feasible = Vec::with_capacity(n_s * n_z * n_a);
        for s in 0..n_s {
            for _z in 0..n_z {
                feasible.extend_from_slice(&feasible_sa[s * n_a..(s + 1) * n_a]);
            }
        }

        let successor = match &self.successor {
            Some(table) => {
                if table.len() != n_s {
                    return Err(DpError::InvalidModel(format!(
                        "successor table has {} rows, expected {n_s}",
                        table.len()
                    )));
                }
                let mut flat = Vec::with_capacity(n_s * n_a);
                for (s, row) in table.iter().enumerate() {
                    if row.len() != n_a {
                        return Err(DpError::InvalidModel(format!(
                            "successor row {s} has {} entries, expected {n_a}",
                            row.len()
                        )));
                    }
                    flat.extend_from_slice(row);
                }
                flat
            }
            None => {
                if n_a != n_s {
                    return Err(DpError::InvalidModel(format!(
                        "without a successor table the action grid must equal the endogenous grid \
                         ({n_a} actions, {n_s} endogenous states)"
                    )));
                }
                (0..n_s).flat_map(|_| 0..n_a).collect()
            }
        };

        let model = ModelSpec {
            s_grid: self.s_grid,
            z_grid: self.z_grid,
            a_grid: self.a_grid,
            feasible,
            successor,
            kernel,
            reward,
            gamble_utility,
        };
        model.validate()?;
        Ok(model)
    }
}

fn flatten_sa_z(name: &str, table: &[Vec<Vec<f64>>], n_s: usize, n_a: usize, n_z: usize) -> Result<Vec<f64>> {
    if table.len() != n_s {
        return Err(DpError::InvalidModel(format!(
            "{name} has {} endogenous rows, expected {n_s}",
            table.len()
        )));
    }
    let mut flat = Vec::with_capacity(n_s * n_a * n_z);
    for (s, per_action) in table.iter().enumerate() {
        if per_action.len() != n_a {
            return Err(DpError::InvalidModel(format!(
                "{name}[{s}] has {} action rows, expected {n_a}",
                per_action.len()
            )));
        }
        for (a, per_z) in per_action.iter().enumerate() {
            if per_z.len() != n_z {
                return Err(DpError::InvalidModel(format!(
                    "{name}[{s}][{a}] has {} entries, expected {n_z}",
                    per_z.len()
                )));
            }
            flat.extend_from_slice(per_z);
        }
    }
    Ok(flat)
}

impl ModelSpec {
    fn validate(&self) -> Result<()> {
        let n_z = self.n_z();
        for z in 0..n_z {
            let row = self.kernel_row(z);
            if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(DpError::InvalidModel(format!(
                    "kernel row {z} has an invalid entry {p}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOL {
                return Err(DpError::InvalidModel(format!("kernel row {z} sums to {sum}, not 1")));
            }
        }
        for (i, r) in self.reward.iter().enumerate() {
            if !r.is_finite() {
                return Err(DpError::InvalidModel(format!("reward entry {i} is not finite")));
            }
        }
        if let Some(g) = &self.gamble_utility {
            if let Some(b) = g.iter().find(|b| !b.is_finite() || **b < 0.0) {
                return Err(DpError::InvalidModel(format!(
                    "gamble utility entries must be finite and non-negative, found {b}"
                )));
            }
        }
        for s in 0..self.n_s() {
            for a in 0..self.n_a() {
                let next = self.successor[s * self.n_a() + a];
                if next >= self.n_s() {
                    return Err(DpError::InvalidModel(format!(
                        "successor({s}, {a}) = {next} is out of range"
                    )));
                }
            }
        }
        for x in 0..self.n_states() {
            if !self.feasible_row(x).iter().any(|f| *f) {
                let (s, z) = self.split(x);
                return Err(DpError::InvalidModel(format!(
                    "state (s={s}, z={z}) has no feasible action"
                )));
            }
        }
        Ok(())
    }

    pub fn n_s(&self) -> usize {
        self.s_grid.len()
    }

    pub fn n_z(&self) -> usize {
        self.z_grid.len()
    }

    pub fn n_a(&self) -> usize {
        self.a_grid.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_s() * self.n_z()
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    pub fn z_grid(&self) -> &[f64] {
        &self.z_grid
    }

    pub fn a_grid(&self) -> &[f64] {
        &self.a_grid
    }

    #[inline]
    pub fn state_index(&self, s: usize, z: usize) -> StateIndex {
        s * self.n_z() + z
    }

    /// `(s, z)` of a flat state index.
    #[inline]
    pub fn split(&self, state: StateIndex) -> (usize, usize) {
        (state / self.n_z(), state % self.n_z())
    }

    #[inline]
    pub fn is_feasible(&self, state: StateIndex, action: ActionIndex) -> bool {
        action < self.n_a() && self.feasible[state * self.n_a() + action]
    }

    fn feasible_row(&self, state: StateIndex) -> &[bool] {
        &self.feasible[state * self.n_a()..(state + 1) * self.n_a()]
    }

    /// Feasible actions at `state` in increasing index order.
    pub fn feasible_actions(&self, state: StateIndex) -> impl Iterator<Item = ActionIndex> + '_ {
        self.feasible_row(state)
            .iter()
            .enumerate()
            .filter_map(|(a, f)| f.then_some(a))
    }

    /// Feasible `(state, action)` pairs.
    pub fn feasible_pairs(&self) -> impl Iterator<Item = (StateIndex, ActionIndex)> + '_ {
        (0..self.n_states()).flat_map(move |x| self.feasible_actions(x).map(move |a| (x, a)))
    }

    #[inline]
    pub fn successor(&self, s: usize, action: ActionIndex) -> usize {
        self.successor[s * self.n_a() + action]
    }

    #[inline]
    pub fn kernel(&self, z: usize, z_next: usize) -> f64 {
        self.kernel[z * self.n_z() + z_next]
    }

    #[inline]
    pub fn kernel_row(&self, z: usize) -> &[f64] {
        &self.kernel[z * self.n_z()..(z + 1) * self.n_z()]
    }

    #[inline]
    pub fn reward(&self, s: usize, action: ActionIndex, z: usize) -> f64 {
        self.reward[(s * self.n_a() + action) * self.n_z() + z]
    }

    /// Reward at a flat state.
    #[inline]
    pub fn reward_at(&self, state: StateIndex, action: ActionIndex) -> f64 {
        let (s, z) = self.split(state);
        self.reward(s, action, z)
    }

    pub fn has_gamble_utility(&self) -> bool {
        self.gamble_utility.is_some()
    }

    /// Gamble utility `B(s, a, z)`, zero when the model carries no table.
    #[inline]
    pub fn gamble_at(&self, state: StateIndex, action: ActionIndex) -> f64 {
        match &self.gamble_utility {
            Some(g) => {
                let (s, z) = self.split(state);
                g[(s * self.n_a() + action) * self.n_z() + z]
            }
            None => 0.0,
        }
    }

    /// `(min, max)` of the reward over feasible pairs.
    pub fn reward_range(&self) -> (f64, f64) {
        self.feasible_pairs()
            .map(|(x, a)| self.reward_at(x, a))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    /// `max |r|` over feasible pairs.
    pub fn reward_abs_max(&self) -> f64 {
        let (lo, hi) = self.reward_range();
        lo.abs().max(hi.abs())
    }

    /// `(min, max)` of the gamble utility over feasible pairs.
    pub fn gamble_range(&self) -> (f64, f64) {
        self.feasible_pairs()
            .map(|(x, a)| self.gamble_at(x, a))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b), hi.max(b)))
    }

    /// Expectation of `f(s_next, z')` under `P(z, .)`.
    #[inline]
    pub fn expect(&self, s_next: usize, z: usize, v: &[f64]) -> f64 {
        let base = s_next * self.n_z();
        self.kernel_row(z)
            .iter()
            .zip(&v[base..base + self.n_z()])
            .map(|(p, x)| p * x)
            .sum()
    }

    /// Nested reward table `reward[s][a][z]`.
    pub fn reward_table(&self) -> Vec<Vec<Vec<f64>>> {
        nest(&self.reward, self.n_s(), self.n_a(), self.n_z())
    }

    pub fn gamble_table(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        self.gamble_utility
            .as_ref()
            .map(|g| nest(g, self.n_s(), self.n_a(), self.n_z()))
    }

    pub fn kernel_table(&self) -> Vec<Vec<f64>> {
        (0..self.n_z()).map(|z| self.kernel_row(z).to_vec()).collect()
    }

    /// Feasibility per endogenous state, `feasible[s][a]`.
    pub fn feasibility_table(&self) -> Vec<Vec<bool>> {
        (0..self.n_s())
            .map(|s| self.feasible_row(self.state_index(s, 0)).to_vec())
            .collect()
    }

    pub fn successor_table(&self) -> Vec<Vec<usize>> {
        self.successor.chunks(self.n_a()).map(|row| row.to_vec()).collect()
    }

    /// True when `successor(s, a) = a` for every pair.
    pub fn has_identity_successor(&self) -> bool {
        self.n_a() == self.n_s() && (0..self.n_s()).all(|s| (0..self.n_a()).all(|a| self.successor(s, a) == a))
    }

    /// A copy with the reward table replaced; shape must match.
    pub fn with_reward(&self, reward: Vec<Vec<Vec<f64>>>) -> Result<ModelSpec> {
        let flat = flatten_sa_z("reward", &reward, self.n_s(), self.n_a(), self.n_z())?;
        let mut out = self.clone();
        out.reward = flat;
        out.validate()?;
        Ok(out)
    }

    /// A copy carrying the given gamble utility table.
    pub fn with_gamble_utility(&self, gamble: Vec<Vec<Vec<f64>>>) -> Result<ModelSpec> {
        let flat = flatten_sa_z("gamble_utility", &gamble, self.n_s(), self.n_a(), self.n_z())?;
        let mut out = self.clone();
        out.gamble_utility = Some(flat);
        out.validate()?;
        Ok(out)
    }

    /// Number of stationary deterministic policies, as a float to avoid overflow.
    pub fn policy_count(&self) -> f64 {
        (0..self.n_states())
            .map(|x| self.feasible_actions(x).count() as f64)
            .product()
    }
}

fn nest(flat: &[f64], n_s: usize, n_a: usize, n_z: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n_s)
        .map(|s| {
            (0..n_a)
                .map(|a| flat[(s * n_a + a) * n_z..(s * n_a + a + 1) * n_z].to_vec())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> ModelBuilder {
        ModelBuilder::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0])
            .kernel(vec![vec![1.0]])
            .reward(vec![vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![0.0]]])
            .successor(vec![vec![0, 1], vec![1, 0]])
    }

    #[test]
    fn builds_and_indexes() {
        let m = two_state().build().unwrap();
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.successor(0, 1), 1);
        assert_eq!(m.successor(1, 1), 0);
        assert_eq!(m.reward(1, 0, 0), 2.0);
        assert_eq!(m.reward_range(), (0.0, 2.0));
        assert_eq!(m.policy_count(), 4.0);
    }

    #[test]
    fn rejects_bad_kernel_row() {
        let err = ModelBuilder::new(vec![0.0], vec![0.0, 1.0], vec![0.0])
            .kernel(vec![vec![0.5, 0.49], vec![0.5, 0.5]])
            .reward(vec![vec![vec![1.0, 1.0]]])
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("kernel row 0"), "{err}");
    }

    #[test]
    fn rejects_negative_kernel_entry() {
        let err = ModelBuilder::new(vec![0.0], vec![0.0, 1.0], vec![0.0])
            .kernel(vec![vec![1.5, -0.5], vec![0.5, 0.5]])
            .reward(vec![vec![vec![1.0, 1.0]]])
            .build()
            .unwrap_err();
        assert!(matches!(err, DpError::InvalidModel(_)));
    }

    #[test]
    fn rejects_state_without_actions() {
        let err = two_state()
            .feasible(vec![vec![true, true], vec![false, false]])
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("no feasible action"), "{err}");
    }

    #[test]
    fn identity_successor_needs_square_grid() {
        let err = ModelBuilder::new(vec![0.0, 1.0], vec![0.0], vec![0.0])
            .kernel(vec![vec![1.0]])
            .reward(vec![vec![vec![1.0]], vec![vec![1.0]]])
            .build()
            .unwrap_err();
        assert!(matches!(err, DpError::InvalidModel(_)));
    }

    #[test]
    fn flat_layout_is_row_major() {
        let m = ModelBuilder::new(vec![0.0, 1.0], vec![0.0, 1.0, 2.0], vec![0.0, 1.0])
            .kernel(vec![vec![1.0, 0.0, 0.0]; 3])
            .reward(vec![vec![vec![1.0; 3]; 2]; 2])
            .build()
            .unwrap();
        assert_eq!(m.state_index(1, 2), 5);
        assert_eq!(m.split(4), (1, 1));
        let v = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(m.expect(1, 0, &v), 3.0);
    }
}
