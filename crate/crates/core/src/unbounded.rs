//! Weighted-norm solver for Epstein-Zin problems with `1 < rho < gamma` and
//! rewards that grow with the state.
//!
//! A weight `kappa >= 1` controls the growth of rewards and of the kernel.
//! Brackets scale with `kappa` and `kappa^theta`, and convergence is measured
//! in the norm `max |v| / kappa^theta`. On a finite grid every function is
//! bounded, so this exercises the weighted construction rather than genuine
//! unboundedness.

use std::fmt;

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::families::{EpsteinZin, EzParams, EzRegime};
use crate::model::{ModelBuilder, ModelSpec, StateIndex};
use crate::solver::{Problem, SolveOptions, SolveReport};
use crate::value::{Bracket, StrictSide};
use crate::verify::CHECK_TOL;

/// Weight function and growth constants.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    /// `kappa(x) >= 1` over the flattened state grid.
    pub kappa: Vec<f64>,
    /// Reward upper growth, `r <= M kappa`.
    pub big_m: f64,
    /// Reward lower growth, `r >= L kappa`.
    pub l: f64,
    /// Kernel upper growth, `E kappa(y, .)^theta <= c kappa^theta`.
    pub c: f64,
    /// Kernel lower growth, `E kappa(y, .) >= d kappa`.
    pub d: f64,
    /// Bracket slack in `(0, L)`; `None` uses `0.1 L`.
    pub delta: Option<f64>,
}

impl WeightSpec {
    /// Constant weight `kappa = 1` with the model's reward bounds and `c = d = 1`.
    pub fn unit(model: &ModelSpec) -> Self {
        let (m, big_m) = model.reward_range();
        Self {
            kappa: vec![1.0; model.n_states()],
            big_m,
            l: m,
            c: 1.0,
            d: 1.0,
            delta: None,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(0.1 * self.l)
    }

    /// `kappa^theta`.
    pub fn kappa_pow(&self, theta: f64) -> Vec<f64> {
        self.kappa.iter().map(|k| k.powf(theta)).collect()
    }

    /// Checks the constant ranges for discount `beta` and exponent `theta`.
    pub fn validate(&self, n_states: usize, beta: f64, theta: f64) -> Result<()> {
        if self.kappa.len() != n_states {
            return Err(DpError::Shape {
                expected: n_states,
                found: self.kappa.len(),
            });
        }
        if let Some(i) = self.kappa.iter().position(|k| !(*k >= 1.0 && k.is_finite())) {
            return Err(DpError::Parameter(format!(
                "weight must be at least 1, found {} at state {i}",
                self.kappa[i]
            )));
        }
        if !(theta > 1.0) {
            return Err(DpError::Regime(format!(
                "weighted solving needs theta > 1 (1 < rho < gamma), got theta = {theta}"
            )));
        }
        if !(self.l > 0.0 && self.l <= self.big_m) {
            return Err(DpError::Parameter(format!(
                "need 0 < L <= M, got L = {}, M = {}",
                self.l, self.big_m
            )));
        }
        let cap = beta.powf(-theta);
        if !(self.c > 0.0 && self.c < cap) {
            return Err(DpError::Parameter(format!(
                "kernel growth constant c = {} must lie in (0, {cap})",
                self.c
            )));
        }
        if !(self.d >= 0.0 && self.d < cap) {
            return Err(DpError::Parameter(format!(
                "kernel floor constant d = {} must lie in [0, {cap})",
                self.d
            )));
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta < self.l) {
            return Err(DpError::Parameter(format!(
                "delta = {delta} must lie in (0, L = {})",
                self.l
            )));
        }
        Ok(())
    }
}

/// The four growth conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCheck {
    RewardUpper,
    RewardLower,
    KernelUpper,
    KernelLower,
}

impl fmt::Display for WeightCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightCheck::RewardUpper => "reward growth bound sup_a r <= M kappa",
            WeightCheck::RewardLower => "reward floor inf_a r >= L kappa",
            WeightCheck::KernelUpper => "kernel growth bound sup_a E[kappa(y, z')^theta] <= c kappa^theta",
            WeightCheck::KernelLower => "kernel floor inf_a E[kappa(y, z')] >= d kappa",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub reward_upper_ok: bool,
    pub reward_lower_ok: bool,
    pub kernel_upper_ok: bool,
    pub kernel_lower_ok: bool,
    /// Largest signed excess beyond tolerance over all states and checks.
    pub worst_violation: f64,
    pub witness: Option<(WeightCheck, StateIndex)>,
}

impl WeightReport {
    pub fn all_ok(&self) -> bool {
        self.reward_upper_ok && self.reward_lower_ok && self.kernel_upper_ok && self.kernel_lower_ok
    }

    pub fn failures(&self) -> Vec<WeightCheck> {
        [
            (self.reward_upper_ok, WeightCheck::RewardUpper),
            (self.reward_lower_ok, WeightCheck::RewardLower),
            (self.kernel_upper_ok, WeightCheck::KernelUpper),
            (self.kernel_lower_ok, WeightCheck::KernelLower),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, k)| k)
        .collect()
    }
}

impl fmt::Display for WeightReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (ok, check) in [
            (self.reward_upper_ok, WeightCheck::RewardUpper),
            (self.reward_lower_ok, WeightCheck::RewardLower),
            (self.kernel_upper_ok, WeightCheck::KernelUpper),
            (self.kernel_lower_ok, WeightCheck::KernelLower),
        ] {
            writeln!(f, "{:<4} {check}", if ok { "ok" } else { "FAIL" })?;
        }
        write!(f, "worst violation {:e}", self.worst_violation)?;
        if let Some((check, state)) = self.witness {
            write!(f, " ({check} at state {state})")?;
        }
        Ok(())
    }
}

/// Exhaustive check of the growth conditions at every state.
pub fn check_weight_assumptions(model: &ModelSpec, spec: &WeightSpec, theta: f64) -> Result<WeightReport> {
    if spec.kappa.len() != model.n_states() {
        return Err(DpError::Shape {
            expected: model.n_states(),
            found: spec.kappa.len(),
        });
    }
    let kappa = &spec.kappa;
    let kappa_pow = spec.kappa_pow(theta);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut failed = Vec::new();
    let mut record = |check: WeightCheck, excess: f64, scale: f64, x: StateIndex| {
        let e = excess - CHECK_TOL * scale.abs().max(1.0);
        if e > 0.0 && !failed.contains(&check) {
            failed.push(check);
        }
        if e > worst {
            worst = e;
            witness = Some((check, x));
        }
    };
    for x in 0..model.n_states() {
        let (s, z) = model.split(x);
        let mut r_hi = f64::NEG_INFINITY;
        let mut r_lo = f64::INFINITY;
        let mut k_hi = f64::NEG_INFINITY;
        let mut k_lo = f64::INFINITY;
        for a in model.feasible_actions(x) {
            let r = model.reward_at(x, a);
            let y = model.successor(s, a);
            r_hi = r_hi.max(r);
            r_lo = r_lo.min(r);
            k_hi = k_hi.max(model.expect(y, z, &kappa_pow));
            k_lo = k_lo.min(model.expect(y, z, kappa));
        }
        let bound = spec.big_m * kappa[x];
        record(WeightCheck::RewardUpper, r_hi - bound, bound, x);
        let bound = spec.l * kappa[x];
        record(WeightCheck::RewardLower, bound - r_lo, bound, x);
        let bound = spec.c * kappa_pow[x];
        record(WeightCheck::KernelUpper, k_hi - bound, bound, x);
        let bound = spec.d * kappa[x];
        record(WeightCheck::KernelLower, bound - k_lo, bound, x);
    }
    Ok(WeightReport {
        reward_upper_ok: !failed.contains(&WeightCheck::RewardUpper),
        reward_lower_ok: !failed.contains(&WeightCheck::RewardLower),
        kernel_upper_ok: !failed.contains(&WeightCheck::KernelUpper),
        kernel_lower_ok: !failed.contains(&WeightCheck::KernelLower),
        worst_violation: worst,
        witness,
    })
}

/// `max |v| / kappa^theta`.
pub fn weighted_norm(v: &[f64], spec: &WeightSpec, theta: f64) -> f64 {
    v.iter()
        .zip(&spec.kappa)
        .map(|(x, k)| x.abs() / k.powf(theta))
        .fold(0.0, f64::max)
}

/// Brackets `w1 = (L - delta)^theta kappa`, `w2 = (M / (1 - beta c^(1/theta)))^theta kappa^theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBracket {
    pub bracket: Bracket,
    /// `L^theta - (L - delta)^theta`; the strict margin at `x` is `epsilon * kappa(x)^theta`.
    pub epsilon: f64,
    pub kappa_pow: Vec<f64>,
}

impl WeightedBracket {
    pub fn new(spec: &WeightSpec, beta: f64, theta: f64) -> Result<Self> {
        spec.validate(spec.kappa.len(), beta, theta)?;
        let delta = spec.delta();
        let lower = (spec.l - delta).powf(theta);
        let upper = (spec.big_m / (1.0 - beta * spec.c.powf(1.0 / theta))).powf(theta);
        let kappa_pow = spec.kappa_pow(theta);
        let w1: Vec<f64> = spec.kappa.iter().map(|k| lower * k).collect();
        let w2: Vec<f64> = kappa_pow.iter().map(|k| upper * k).collect();
        let epsilon = spec.l.powf(theta) - lower;
        Ok(Self {
            bracket: Bracket::new(w1, w2, epsilon, StrictSide::Lower)?,
            epsilon,
            kappa_pow,
        })
    }

    /// Largest violation of `H(x, a, w1) >= w1(x) + epsilon kappa(x)^theta` and of
    /// `H(x, a, w2) <= w2(x)` over all feasible pairs, each relative to its scale.
    /// Both entries are non-positive when the conditions hold.
    pub fn check_conditions<A: Aggregator>(&self, model: &ModelSpec, agg: A) -> Result<(f64, f64)> {
        let (w1, w2) = (self.bracket.w1(), self.bracket.w2());
        let mut strict_lower = f64::NEG_INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for (x, a) in model.feasible_pairs() {
            let floor = w1[x] + self.epsilon * self.kappa_pow[x];
            let h1 = agg.eval(model, x, a, w1)?;
            strict_lower = strict_lower.max((floor - h1) / floor.abs().max(h1.abs()));
            let h2 = agg.eval(model, x, a, w2)?;
            upper = upper.max((h2 - w2[x]) / w2[x].abs().max(h2.abs()));
        }
        Ok((strict_lower, upper))
    }
}

/// The aggregator for `params`, rejecting regimes other than `1 < rho < gamma`.
pub fn weighted_aggregator(params: EzParams) -> Result<EpsteinZin> {
    let agg = EpsteinZin::new(params)?;
    if agg.regime() != EzRegime::ConcaveMinThetaAboveOne {
        return Err(DpError::Regime(format!(
            "weighted solving covers 1 < rho < gamma only, got rho = {}, gamma = {}",
            params.rho, params.gamma
        )));
    }
    Ok(agg)
}

/// Minimizing value function iteration in the `kappa^theta`-weighted norm.
pub fn solve_unbounded_ez(
    model: &ModelSpec,
    params: EzParams,
    spec: &WeightSpec,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let agg = weighted_aggregator(params)?;
    let theta = agg.theta();
    let report = check_weight_assumptions(model, spec, theta)?;
    if let Some(check) = report.failures().first() {
        return Err(DpError::Parameter(format!("weight condition fails: {check}")));
    }
    let wb = WeightedBracket::new(spec, params.beta, theta)?;
    let opts = SolveOptions {
        tol,
        max_iter,
        weights: Some(wb.kappa_pow.clone()),
        ..SolveOptions::default()
    };
    Problem::with_bracket(model, agg, wb.bracket)?.solve(&opts)
}

/// A savings ladder whose rewards grow geometrically with the endogenous state.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowingGrid {
    pub n_s: usize,
    pub n_z: usize,
    /// Ratio between consecutive endogenous grid points (`s_0 = 1`).
    pub ratio: f64,
    /// States `s` with `s % choice_stride == 0` choose between staying and moving up;
    /// the rest stay put.
    pub choice_stride: usize,
}

impl GrowingGrid {
    /// Level `s_i = ratio^i`, which is also the weight.
    pub fn level(&self, s: usize) -> f64 {
        self.ratio.powi(s as i32)
    }

    /// Reward `s_level * shock(z)`, scaled by 0.9 when moving up.
    pub fn model(&self) -> ModelSpec {
        let n_s = self.n_s;
        let n_z = self.n_z;
        let shock = |z: usize| {
            if n_z == 1 {
                1.0
            } else {
                1.0 + 0.2 * z as f64 / (n_z - 1) as f64
            }
        };
        let kernel: Vec<Vec<f64>> = (0..n_z)
            .map(|z| {
                (0..n_z)
                    .map(|zn| match (n_z, z == zn) {
                        (1, _) => 1.0,
                        (_, true) => 0.6,
                        _ => 0.4 / (n_z - 1) as f64,
                    })
                    .collect()
            })
            .collect();
        let feasible: Vec<Vec<bool>> = (0..n_s)
            .map(|s| {
                (0..n_s)
                    .map(|a| a == s || (a == s + 1 && s % self.choice_stride == 0))
                    .collect()
            })
            .collect();
        let reward: Vec<Vec<Vec<f64>>> = (0..n_s)
            .map(|s| {
                (0..n_s)
                    .map(|a| {
                        let scale = if a > s { 0.9 } else { 1.0 };
                        (0..n_z).map(|z| scale * self.level(s) * shock(z)).collect()
                    })
                    .collect()
            })
            .collect();
        ModelBuilder::new(
            (0..n_s).map(|s| self.level(s)).collect(),
            (0..n_z).map(shock).collect(),
            (0..n_s).map(|s| self.level(s)).collect(),
        )
        .kernel(kernel)
        .reward(reward)
        .feasible(feasible)
        .build()
        .expect("growing grid satisfies every invariant")
    }

    /// `kappa(s, z) = s_level`, `L = 0.9`, `M = 1.2`, `c = ratio^theta` (plus a hair), `d = 1`.
    pub fn weight(&self, theta: f64) -> WeightSpec {
        let kappa = (0..self.n_s)
            .flat_map(|s| std::iter::repeat_n(self.level(s), self.n_z))
            .collect();
        WeightSpec {
            kappa,
            big_m: 1.2,
            l: 0.9,
            c: self.ratio.powf(theta) * (1.0 + 1e-9),
            d: 1.0,
            delta: None,
        }
    }
}
