//! Preference families.
//!
//! Every family holds its value functions in a transformed space where the
//! Bellman operator is monotone and either convex (maximized) or concave
//! (minimized). `to_original_units` maps back to lifetime utility.

mod additive;
mod ambiguity;
mod epstein_zin;
mod narrow_framing;
mod risk_sensitive;

pub use additive::{Additive, AdditiveParams};
pub use ambiguity::{r_theta, Ambiguity, AmbiguityParams};
pub use epstein_zin::{flow_utility, EpsteinZin, EzParams, EzRegime};
pub use narrow_framing::{
    find_nf_lower_solution, NarrowFraming, NarrowFramingParams, NfBounds, NfLowerSolution, BISECTION_STEPS, PHI_TOL,
    SCAN_LIMIT,
};
pub use risk_sensitive::{RiskSensitive, RiskSensitiveParams};

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction};

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(DpError::Parameter(format!(
            "discount factor must lie in (0, 1), got {beta}"
        )))
    }
}

/// Default bracket slack `0.05 * max(1, M)`.
pub fn default_delta(big_m: f64) -> f64 {
    0.05 * big_m.max(1.0)
}

pub(crate) fn domain(state: StateIndex, message: String) -> DpError {
    DpError::Domain { state, message }
}

/// `v^e` for positive `v`.
pub(crate) fn power_transform(v: &[f64], e: f64) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            if x > 0.0 {
                Ok(x.powf(e))
            } else {
                Err(domain(i, format!("utility {x} is not positive")))
            }
        })
        .collect()
}

/// `v_hat^(1 / e)` for positive `v_hat`.
pub(crate) fn power_inverse(v_hat: &[f64], e: f64) -> Result<Vec<f64>> {
    power_transform(v_hat, 1.0 / e)
}

pub(crate) fn require_positive_reward(model: &ModelSpec, family: &str) -> Result<()> {
    for (x, a) in model.feasible_pairs() {
        let r = model.reward_at(x, a);
        if !(r > 0.0) {
            return Err(DpError::InvalidModel(format!(
                "{family} needs strictly positive rewards, found {r} at state {x}, action {a}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn require_nonnegative_reward(model: &ModelSpec, family: &str) -> Result<()> {
    for (x, a) in model.feasible_pairs() {
        let r = model.reward_at(x, a);
        if !(r >= 0.0) {
            return Err(DpError::InvalidModel(format!(
                "{family} needs non-negative rewards, found {r} at state {x}, action {a}"
            )));
        }
    }
    Ok(())
}

/// Any of the built-in families behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Additive(Additive),
    EpsteinZin(EpsteinZin),
    RiskSensitive(RiskSensitive),
    Ambiguity(Ambiguity),
    NarrowFraming(NarrowFraming),
}

macro_rules! dispatch {
    ($self:expr, $agg:ident => $body:expr) => {
        match $self {
            Family::Additive($agg) => $body,
            Family::EpsteinZin($agg) => $body,
            Family::RiskSensitive($agg) => $body,
            Family::Ambiguity($agg) => $body,
            Family::NarrowFraming($agg) => $body,
        }
    };
}

impl Aggregator for Family {
    fn name(&self) -> &str {
        dispatch!(self, a => a.name())
    }

    fn direction(&self) -> Direction {
        dispatch!(self, a => a.direction())
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        dispatch!(self, a => a.continuation_at(model, y, z, v))
    }

    fn continuation(&self, model: &ModelSpec, v: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, a => a.continuation(model, v))
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        dispatch!(self, a => a.combine(model, state, action, c))
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        dispatch!(self, a => a.bracket(model))
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        dispatch!(self, a => a.validate(model))
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, a => a.to_original_units(v_hat))
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, a => a.from_original_units(v))
    }
}

impl From<Additive> for Family {
    fn from(a: Additive) -> Self {
        Family::Additive(a)
    }
}

impl From<EpsteinZin> for Family {
    fn from(a: EpsteinZin) -> Self {
        Family::EpsteinZin(a)
    }
}

impl From<RiskSensitive> for Family {
    fn from(a: RiskSensitive) -> Self {
        Family::RiskSensitive(a)
    }
}

impl From<Ambiguity> for Family {
    fn from(a: Ambiguity) -> Self {
        Family::Ambiguity(a)
    }
}

impl From<NarrowFraming> for Family {
    fn from(a: NarrowFraming) -> Self {
        Family::NarrowFraming(a)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use crate::model::{ModelBuilder, ModelSpec};
    use crate::synth::{random_model, RandomModel};

    /// `n` endogenous states, one exogenous state, action = successor, constant reward.
    pub fn constant_model(n: usize, r: f64) -> ModelSpec {
        crate::synth::constant_reward_model(n, 1, r)
    }

    /// Two states, two actions: `a0` stays, `a1` switches.
    /// Rewards `s0: {a0: 0, a1: 1}`, `s1: {a0: 2, a1: 0}`.
    pub fn two_state_model() -> ModelSpec {
        ModelBuilder::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0])
            .kernel(vec![vec![1.0]])
            .reward(vec![vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![0.0]]])
            .successor(vec![vec![0, 1], vec![1, 0]])
            .build()
            .unwrap()
    }

    /// Random model with `n_s` endogenous states, `n_z` exogenous states, action = successor.
    pub fn random_positive_model(n_s: usize, n_z: usize, seed: u64) -> ModelSpec {
        random_model(
            &RandomModel {
                n_s,
                n_z,
                n_a: None,
                reward_range: (0.2, 1.5),
                feasible_prob: 1.0,
            },
            seed,
        )
    }
}
