use rayon::prelude::*;

use crate::aggregator::{check_len, Aggregator, PARALLEL_WORK_THRESHOLD};
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex, KERNEL_ROW_TOL};
use crate::value::{Bracket, Direction, StrictSide};

use super::{check_beta, default_delta, domain, power_inverse, power_transform, require_positive_reward};

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityParams {
    pub beta: f64,
    pub rho: f64,
    pub gamma: f64,
    /// Ambiguity aversion; must exceed `gamma`.
    pub eta: f64,
    /// One kernel `pi_theta[z][z']` per candidate model.
    pub kernels: Vec<Vec<Vec<f64>>>,
    /// Belief weights `mu[z][theta]`.
    pub mu: Vec<Vec<f64>>,
    pub delta: Option<f64>,
}

impl AmbiguityParams {
    /// `(1 - gamma) / (1 - eta)`.
    pub fn xi1(&self) -> f64 {
        (1.0 - self.gamma) / (1.0 - self.eta)
    }

    /// `(1 - eta) / (1 - rho)`; undefined in the limiting case.
    pub fn xi2(&self) -> f64 {
        (1.0 - self.eta) / (1.0 - self.rho)
    }

    /// True when `rho = 1`.
    pub fn limiting(&self) -> bool {
        self.rho == 1.0
    }
}

/// Smooth ambiguity aversion on `v_hat = v^(1 - eta)` (or `exp((1 - eta) v)` when `rho = 1`).
///
/// The continuation aggregate mixes the certainty equivalents
/// `R_theta v(y, z) = [sum_z' v(y, z')^xi1 pi_theta(z, z')]^(1 / xi1)` with weights `mu(z, theta)`:
///
/// * `rho != 1`: `H = (r + beta C^(1 / xi2))^xi2`
/// * `rho = 1`: `H = exp((1 - eta) r + beta ln C)`
///
/// Both are minimized. The model's own kernel is not used.
#[derive(Debug, Clone, PartialEq)]
pub struct Ambiguity {
    params: AmbiguityParams,
    n_z: usize,
}

impl Ambiguity {
    pub fn new(params: AmbiguityParams) -> Result<Self> {
        check_beta(params.beta)?;
        let AmbiguityParams { rho, gamma, eta, .. } = params;
        if !(rho > 0.0 && rho <= 1.0 && 1.0 < gamma && gamma < eta) {
            return Err(DpError::Parameter(format!(
                "ambiguity aversion needs 0 < rho <= 1 < gamma < eta, got rho = {rho}, gamma = {gamma}, eta = {eta}"
            )));
        }
        if let Some(d) = params.delta {
            if !(d > 0.0) {
                return Err(DpError::Parameter(format!("delta must be positive, got {d}")));
            }
        }
        if params.kernels.is_empty() {
            return Err(DpError::Parameter("the model set must be non-empty".into()));
        }
        let n_z = params.mu.len();
        let n_theta = params.kernels.len();
        for (z, row) in params.mu.iter().enumerate() {
            check_distribution(row, n_theta, &format!("mu row {z}"))?;
        }
        for (t, kernel) in params.kernels.iter().enumerate() {
            if kernel.len() != n_z {
                return Err(DpError::Parameter(format!(
                    "kernel {t} has {} rows, expected {n_z}",
                    kernel.len()
                )));
            }
            for (z, row) in kernel.iter().enumerate() {
                check_distribution(row, n_z, &format!("kernel {t} row {z}"))?;
            }
        }
        Ok(Self { params, n_z })
    }

    pub fn params(&self) -> &AmbiguityParams {
        &self.params
    }

    /// Certainty equivalent `R_theta v(y, z)` under candidate model `theta`.
    pub fn certainty_equivalent(&self, model: &ModelSpec, theta: usize, y: usize, z: usize, v: &[f64]) -> f64 {
        let base = y * model.n_z();
        r_theta(
            &self.params.kernels[theta][z],
            &v[base..base + model.n_z()],
            self.params.xi1(),
        )
    }

    fn delta_for(&self, model: &ModelSpec) -> f64 {
        self.params
            .delta
            .unwrap_or_else(|| default_delta(model.reward_abs_max()))
    }

    fn value_exponent(&self) -> f64 {
        1.0 - self.params.eta
    }
}

fn check_distribution(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(DpError::Parameter(format!(
            "{what} has {} entries, expected {len}",
            row.len()
        )));
    }
    if row.iter().any(|p| !(*p >= 0.0)) {
        return Err(DpError::Parameter(format!("{what} has a negative entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > KERNEL_ROW_TOL {
        return Err(DpError::Parameter(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// `R_theta` applied to a whole function of `z'`: `[sum_z' f(z')^xi1 pi(z')]^(1 / xi1)`.
pub fn r_theta(pi_row: &[f64], f: &[f64], xi1: f64) -> f64 {
    pi_row
        .iter()
        .zip(f)
        .map(|(p, x)| p * x.powf(xi1))
        .sum::<f64>()
        .powf(1.0 / xi1)
}

impl Aggregator for Ambiguity {
    fn name(&self) -> &str {
        "ambiguity"
    }

    fn direction(&self) -> Direction {
        Direction::Min
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        let base = y * model.n_z();
        if let Some(bad) = v[base..base + model.n_z()].iter().position(|x| !(*x >= 0.0)) {
            return Err(domain(base + bad, format!("value {} is negative", v[base + bad])));
        }
        let c: f64 = self.params.mu[z]
            .iter()
            .enumerate()
            .map(|(t, w)| w * self.certainty_equivalent(model, t, y, z, v))
            .sum();
        if !(c > 0.0) {
            return Err(domain(
                model.state_index(y, z),
                format!("continuation aggregate {c} is not positive"),
            ));
        }
        Ok(c)
    }

    /// Same values as the per-state default, with `v^xi1` computed once per sweep.
    fn continuation(&self, model: &ModelSpec, v: &[f64]) -> Result<Vec<f64>> {
        check_len(model, v)?;
        if let Some(bad) = v.iter().position(|x| !(*x >= 0.0)) {
            return Err(domain(bad, format!("value {} is negative", v[bad])));
        }
        let xi1 = self.params.xi1();
        let powered: Vec<f64> = v.iter().map(|x| x.powf(xi1)).collect();
        let n_z = model.n_z();
        let at = |i: usize| -> Result<f64> {
            let (y, z) = model.split(i);
            let row = &powered[y * n_z..(y + 1) * n_z];
            let c: f64 = self.params.mu[z]
                .iter()
                .zip(&self.params.kernels)
                .map(|(w, kernel)| {
                    let m: f64 = kernel[z].iter().zip(row).map(|(p, x)| p * x).sum();
                    w * m.powf(1.0 / xi1)
                })
                .sum();
            if c > 0.0 {
                Ok(c)
            } else {
                Err(domain(i, format!("continuation aggregate {c} is not positive")))
            }
        };
        if model.n_states() * n_z >= PARALLEL_WORK_THRESHOLD {
            (0..model.n_states()).into_par_iter().map(at).collect()
        } else {
            (0..model.n_states()).map(at).collect()
        }
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        let p = &self.params;
        let r = model.reward_at(state, action);
        if p.limiting() {
            Ok(((1.0 - p.eta) * r + p.beta * c.ln()).exp())
        } else {
            let xi2 = p.xi2();
            let base = r + p.beta * c.powf(1.0 / xi2);
            if !(base > 0.0) {
                return Err(domain(state, format!("aggregate {base} is not positive")));
            }
            Ok(base.powf(xi2))
        }
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.n_z != model.n_z() {
            return Err(DpError::Parameter(format!(
                "belief tables cover {} exogenous states, the model has {}",
                self.n_z,
                model.n_z()
            )));
        }
        if self.params.limiting() {
            Ok(())
        } else {
            require_positive_reward(model, self.name())
        }
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        self.validate(model)?;
        let p = &self.params;
        let beta = p.beta;
        let delta = self.delta_for(model);
        let n = model.n_states();
        if p.limiting() {
            let big_m = model.reward_abs_max();
            let k = 1.0 - p.eta;
            let horizon = big_m / (1.0 - beta);
            let w1 = (k * (horizon + delta)).exp();
            let w2 = (-k * horizon).exp();
            let eps = (k * (horizon + beta * delta)).exp() - w1;
            Bracket::constant(n, w1, w2, eps, StrictSide::Lower)
        } else {
            let (m, big_m) = model.reward_range();
            let xi2 = p.xi2();
            let top = (big_m + delta) / (1.0 - beta);
            let w1 = top.powf(xi2);
            let w2 = (m / (1.0 - beta)).powf(xi2);
            let eps = (top - delta).powf(xi2) - w1;
            Bracket::constant(n, w1, w2, eps, StrictSide::Lower)
        }
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        if self.params.limiting() {
            v_hat
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    if x > 0.0 {
                        Ok(x.ln() / self.value_exponent())
                    } else {
                        Err(domain(i, format!("cannot take the log of {x}")))
                    }
                })
                .collect()
        } else {
            power_inverse(v_hat, self.value_exponent())
        }
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.params.limiting() {
            Ok(v.iter().map(|x| (self.value_exponent() * x).exp()).collect())
        } else {
            power_transform(v, self.value_exponent())
        }
    }
}
