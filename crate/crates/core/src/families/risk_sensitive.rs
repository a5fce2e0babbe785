use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction, StrictSide};

use super::{check_beta, default_delta, domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSensitiveParams {
    pub beta: f64,
    /// Risk sensitivity, strictly positive.
    pub theta: f64,
    /// Bracket slack; `None` uses the default.
    pub delta: Option<f64>,
}

/// Risk-sensitive aggregator on `v_hat = exp(-theta v)`:
///
/// `H((s, z), a, v) = exp(-theta r(s, a, z)) * E[v(y, z') | z]^beta`, minimized.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSensitive {
    params: RiskSensitiveParams,
}

impl RiskSensitive {
    pub fn new(params: RiskSensitiveParams) -> Result<Self> {
        check_beta(params.beta)?;
        if !(params.theta > 0.0 && params.theta.is_finite()) {
            return Err(DpError::Parameter(format!(
                "risk sensitivity must be positive, got {}",
                params.theta
            )));
        }
        if let Some(d) = params.delta {
            if !(d > 0.0) {
                return Err(DpError::Parameter(format!("delta must be positive, got {d}")));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &RiskSensitiveParams {
        &self.params
    }
}

impl Aggregator for RiskSensitive {
    fn name(&self) -> &str {
        "risk-sensitive"
    }

    fn direction(&self) -> Direction {
        Direction::Min
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        let c = model.expect(y, z, v);
        if !(c > 0.0) {
            return Err(domain(
                model.state_index(y, z),
                format!("continuation expectation {c} is not positive"),
            ));
        }
        Ok(c)
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        let RiskSensitiveParams { beta, theta, .. } = self.params;
        Ok((-theta * model.reward_at(state, action)).exp() * c.powf(beta))
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        let RiskSensitiveParams { beta, theta, delta } = self.params;
        let m = model.reward_abs_max();
        let delta = delta.unwrap_or_else(|| default_delta(m));
        let horizon = m / (1.0 - beta);
        let w1 = (-theta * (horizon + delta)).exp();
        let w2 = (theta * horizon).exp();
        let eps = (-theta * (horizon + beta * delta)).exp() - w1;
        Bracket::constant(model.n_states(), w1, w2, eps, StrictSide::Lower)
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        v_hat
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x > 0.0 {
                    Ok(-x.ln() / self.params.theta)
                } else {
                    Err(domain(i, format!("cannot take the log of {x}")))
                }
            })
            .collect()
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.iter().map(|x| (-self.params.theta * x).exp()).collect())
    }
}
