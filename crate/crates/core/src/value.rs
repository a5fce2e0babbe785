use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec};

/// Whether the Bellman operator maximizes or minimizes over feasible actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    /// True when `candidate` improves on `incumbent` strictly.
    #[inline]
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Max => candidate > incumbent,
            Direction::Min => candidate < incumbent,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Max => Direction::Min,
            Direction::Min => Direction::Max,
        }
    }
}

/// A function on the state grid, held in the transformed value space of its aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise negation.
    pub fn negated(&self) -> Self {
        Self::new(self.values.iter().map(|v| -v).collect())
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// A stationary deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    action_at: Vec<ActionIndex>,
}

impl Policy {
    pub fn new(action_at: Vec<ActionIndex>) -> Self {
        Self { action_at }
    }

    pub fn actions(&self) -> &[ActionIndex] {
        &self.action_at
    }

    pub fn len(&self) -> usize {
        self.action_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_at.is_empty()
    }

    pub fn check_feasible(&self, model: &ModelSpec) -> Result<()> {
        if self.action_at.len() != model.n_states() {
            return Err(DpError::Shape {
                expected: model.n_states(),
                found: self.action_at.len(),
            });
        }
        for (state, &action) in self.action_at.iter().enumerate() {
            if !model.is_feasible(state, action) {
                return Err(DpError::Infeasible { state, action });
            }
        }
        Ok(())
    }
}

impl Deref for Policy {
    type Target = [ActionIndex];

    fn deref(&self) -> &[ActionIndex] {
        &self.action_at
    }
}

/// Which bracketing function satisfies its inequality with a uniform margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrictSide {
    /// `H(x, a, w2) <= w2(x) - epsilon`; maximization programs.
    Upper,
    /// `H(x, a, w1) >= w1(x) + epsilon`; minimization programs.
    Lower,
}

impl StrictSide {
    pub fn for_direction(direction: Direction) -> Self {
        match direction {
            Direction::Max => StrictSide::Upper,
            Direction::Min => StrictSide::Lower,
        }
    }
}

/// Lower and upper bounding functions of the candidate value class `[w1, w2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    w1: Vec<f64>,
    w2: Vec<f64>,
    epsilon: f64,
    strict_side: StrictSide,
}

/// Slack used when testing membership in a bracket.
pub const BRACKET_SLACK: f64 = 1e-9;

impl Bracket {
    pub fn new(w1: Vec<f64>, w2: Vec<f64>, epsilon: f64, strict_side: StrictSide) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(DpError::Shape {
                expected: w1.len(),
                found: w2.len(),
            });
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(DpError::Parameter(format!(
                "bracket margin must be positive, got {epsilon}"
            )));
        }
        for (i, (lo, hi)) in w1.iter().zip(&w2).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(DpError::Parameter(format!(
                    "bracket entries at state {i} are not finite ({lo}, {hi})"
                )));
            }
            if lo > hi {
                return Err(DpError::Parameter(format!(
                    "bracket is inverted at state {i}: w1 = {lo} > w2 = {hi}"
                )));
            }
        }
        Ok(Self {
            w1,
            w2,
            epsilon,
            strict_side,
        })
    }

    pub fn constant(n: usize, w1: f64, w2: f64, epsilon: f64, strict_side: StrictSide) -> Result<Self> {
        Self::new(vec![w1; n], vec![w2; n], epsilon, strict_side)
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn strict_side(&self) -> StrictSide {
        self.strict_side
    }

    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }

    /// `(-w2, -w1)`, strict side swapped.
    pub fn conjugate(&self) -> Bracket {
        Bracket {
            w1: self.w2.iter().map(|w| -w).collect(),
            w2: self.w1.iter().map(|w| -w).collect(),
            epsilon: self.epsilon,
            strict_side: match self.strict_side {
                StrictSide::Upper => StrictSide::Lower,
                StrictSide::Lower => StrictSide::Upper,
            },
        }
    }

    /// Starting point of iteration: `w1` for maximization, `w2` for minimization.
    pub fn start(&self, direction: Direction) -> ValueFunction {
        match direction {
            Direction::Max => ValueFunction::new(self.w1.clone()),
            Direction::Min => ValueFunction::new(self.w2.clone()),
        }
    }

    /// Checks `w1 <= v <= w2` up to a relative slack of [`BRACKET_SLACK`].
    pub fn check_contains(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(DpError::Shape {
                expected: self.len(),
                found: v.len(),
            });
        }
        for (state, ((&x, &lo), &hi)) in v.iter().zip(&self.w1).zip(&self.w2).enumerate() {
            let below = lo - BRACKET_SLACK * lo.abs().max(1.0);
            let above = hi + BRACKET_SLACK * hi.abs().max(1.0);
            if !(x >= below && x <= above) {
                return Err(DpError::OutsideBracket {
                    state,
                    value: x,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.check_contains(v).is_ok()
    }
}

/// `max_x |u(x) - v(x)|`.
pub fn sup_norm_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(DpError::Shape {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `max_x |u(x) - v(x)| / weight(x)`.
pub fn weighted_distance(u: &[f64], v: &[f64], weight: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() != weight.len() {
        return Err(DpError::Shape {
            expected: u.len(),
            found: if v.len() != u.len() { v.len() } else { weight.len() },
        });
    }
    Ok(u.iter()
        .zip(v)
        .zip(weight)
        .map(|((a, b), w)| (a - b).abs() / w)
        .fold(0.0, f64::max))
}
