use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction, StrictSide};

use super::{check_beta, default_delta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveParams {
    pub beta: f64,
    /// Margin of the strict upper solution; `None` uses the default slack.
    pub eps_margin: Option<f64>,
}

/// `H((s, z), a, v) = F(s, a, z) + beta * E[v(y, z') | z]`, maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct Additive {
    params: AdditiveParams,
}

impl Additive {
    pub fn new(params: AdditiveParams) -> Result<Self> {
        if !(params.beta > 0.0 && params.beta < 1.0) {
            // A discount factor at or above one leaves no finite upper solution.
            return Err(DpError::Parameter(format!(
                "upper solution fails: additive discount factor must lie in (0, 1), got {}",
                params.beta
            )));
        }
        if let Some(eps) = params.eps_margin {
            if !(eps > 0.0) {
                return Err(DpError::Parameter(format!("eps_margin must be positive, got {eps}")));
            }
        }
        Ok(Self { params })
    }

    /// Builds the aggregator without parameter checks. Intended for
    /// injecting deliberate violations into the assumption checker.
    pub fn unchecked(params: AdditiveParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &AdditiveParams {
        &self.params
    }
}

impl Aggregator for Additive {
    fn name(&self) -> &str {
        "additive"
    }

    fn direction(&self) -> Direction {
        Direction::Max
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        Ok(model.expect(y, z, v))
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        Ok(model.reward_at(state, action) + self.params.beta * c)
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        check_beta(self.params.beta)?;
        let m = model.reward_abs_max();
        let eps = self.params.eps_margin.unwrap_or_else(|| default_delta(m));
        let beta = self.params.beta;
        Bracket::constant(
            model.n_states(),
            -m / (1.0 - beta),
            (m + eps) / (1.0 - beta),
            eps,
            StrictSide::Upper,
        )
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        Ok(v_hat.to_vec())
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}
