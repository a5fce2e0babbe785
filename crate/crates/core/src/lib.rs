//! Value function iteration for finite Markov decision problems with recursive preferences.
//!
//! A problem is a [`ModelSpec`] (grids, feasibility, exogenous kernel, rewards)
//! paired with an [`Aggregator`] that evaluates the right-hand side
//! `H(x, a, v)` of the Bellman equation. Each built-in family supplies a
//! [`Bracket`] `[w1, w2]` of candidate value functions on which iteration from
//! the appropriate endpoint converges to the unique fixed point.

pub mod aggregator;
pub mod cli;
pub mod error;
pub mod families;
pub mod io;
pub mod model;
pub mod solver;
pub mod synth;
pub mod unbounded;
pub mod value;
pub mod verify;

pub use aggregator::{conjugate_aggregator, Aggregator, Conjugate};
pub use error::{DpError, Result};
pub use families::Family;
pub use model::{ActionIndex, ModelBuilder, ModelSpec, StateIndex};
pub use solver::{
    apply_bellman, apply_sigma_operator, greedy_policy, solve_sigma_value, value_function_iteration, Problem,
    SolveOptions, SolveReport,
};
pub use value::{sup_norm_distance, Bracket, Direction, Policy, StrictSide, ValueFunction};
