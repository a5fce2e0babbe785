//! State-action aggregators.
//!
//! Every family evaluates `H(x, a, v)` in two stages: a continuation aggregate
//! `C(y, z)` that summarizes `v(y, .)` given the current exogenous state `z`
//! (an expectation, or a nested certainty equivalent), and a combination step
//! that merges `C(successor(s, a), z)` with the period reward. Sweeps compute
//! the whole `C` table once per iterate.

use rayon::prelude::*;

use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction};

/// Models with at least this many `(state, z')` terms per sweep are swept in parallel.
pub const PARALLEL_WORK_THRESHOLD: usize = 1 << 14;

pub trait Aggregator: Sync {
    fn name(&self) -> &str;

    fn direction(&self) -> Direction;

    /// Continuation aggregate at successor endogenous state `y` and current exogenous state `z`.
    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64>;

    /// The continuation table over all `(y, z)`, laid out like the state grid.
    fn continuation(&self, model: &ModelSpec, v: &[f64]) -> Result<Vec<f64>> {
        check_len(model, v)?;
        let at = |i: usize| {
            let (y, z) = model.split(i);
            self.continuation_at(model, y, z, v)
        };
        if model.n_states() * model.n_z() >= PARALLEL_WORK_THRESHOLD {
            (0..model.n_states()).into_par_iter().map(at).collect()
        } else {
            (0..model.n_states()).map(at).collect()
        }
    }

    /// Merges the reward at `(state, action)` with the continuation aggregate.
    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, continuation: f64) -> Result<f64>;

    /// `H(x, a, v)`.
    fn eval(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, v: &[f64]) -> Result<f64> {
        check_len(model, v)?;
        if state >= model.n_states() || !model.is_feasible(state, action) {
            return Err(DpError::Infeasible { state, action });
        }
        let (s, z) = model.split(state);
        let c = self.continuation_at(model, model.successor(s, action), z, v)?;
        self.combine(model, state, action, c)
    }

    /// The family's bracketing functions for `model`.
    fn bracket(&self, model: &ModelSpec) -> Result<Bracket>;

    /// Checks family-specific requirements on the model (reward sign, table shapes).
    fn validate(&self, _model: &ModelSpec) -> Result<()> {
        Ok(())
    }

    /// Maps transformed values back to lifetime utility.
    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>>;

    /// Inverse of [`Aggregator::to_original_units`].
    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn check_len(model: &ModelSpec, v: &[f64]) -> Result<()> {
    if v.len() != model.n_states() {
        return Err(DpError::Shape {
            expected: model.n_states(),
            found: v.len(),
        });
    }
    Ok(())
}

impl<T: Aggregator + ?Sized> Aggregator for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn direction(&self) -> Direction {
        (**self).direction()
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        (**self).continuation_at(model, y, z, v)
    }

    fn continuation(&self, model: &ModelSpec, v: &[f64]) -> Result<Vec<f64>> {
        (**self).continuation(model, v)
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        (**self).combine(model, state, action, c)
    }

    fn eval(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, v: &[f64]) -> Result<f64> {
        (**self).eval(model, state, action, v)
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        (**self).bracket(model)
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        (**self).validate(model)
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        (**self).to_original_units(v_hat)
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).from_original_units(v)
    }
}

/// The conjugate `Ȟ(x, a, v) = -H(x, a, -v)` of a minimizing aggregator.
///
/// Solving the conjugate maximization program and negating the result reproduces
/// the minimization program's fixed point and policies.
#[derive(Debug, Clone)]
pub struct Conjugate<A> {
    inner: A,
    name: String,
}

impl<A: Aggregator> Conjugate<A> {
    pub fn new(inner: A) -> Result<Self> {
        if inner.direction() != Direction::Min {
            return Err(DpError::Direction);
        }
        let name = format!("conjugate({})", inner.name());
        Ok(Self { inner, name })
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

/// Builds the conjugate of a minimizing aggregator; maximizing ones are rejected.
pub fn conjugate_aggregator<A: Aggregator>(agg: A) -> Result<Conjugate<A>> {
    Conjugate::new(agg)
}

impl<A: Aggregator> Aggregator for Conjugate<A> {
    fn name(&self) -> &str {
        &self.name
    }

    fn direction(&self) -> Direction {
        Direction::Max
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        let negated: Vec<f64> = v.iter().map(|x| -x).collect();
        self.inner.continuation_at(model, y, z, &negated)
    }

    fn continuation(&self, model: &ModelSpec, v: &[f64]) -> Result<Vec<f64>> {
        let negated: Vec<f64> = v.iter().map(|x| -x).collect();
        self.inner.continuation(model, &negated)
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        Ok(-self.inner.combine(model, state, action, c)?)
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        Ok(self.inner.bracket(model)?.conjugate())
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        self.inner.validate(model)
    }

    fn to_original_units(&self, v_check: &[f64]) -> Result<Vec<f64>> {
        let negated: Vec<f64> = v_check.iter().map(|x| -x).collect();
        self.inner.to_original_units(&negated)
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.from_original_units(v)?.into_iter().map(|x| -x).collect())
    }
}
