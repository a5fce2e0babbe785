use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction, StrictSide};

use super::epstein_zin::EzRegime;
use super::{check_beta, domain, power_inverse, power_transform, require_positive_reward};

/// Threshold that `phi(d) / max(1, d)` must exceed at the accepted root.
pub const PHI_TOL: f64 = 1e-8;
/// Bisection steps after the scan brackets the root.
pub const BISECTION_STEPS: usize = 60;
/// Scan budget before giving up.
pub const SCAN_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarrowFramingParams {
    pub beta: f64,
    pub rho: f64,
    pub gamma: f64,
}

/// Epstein-Zin utility with narrow framing, on `v_hat = v^(1 - gamma)`:
///
/// `H((s, z), a, v) = { r + beta [ E[v(y, z') | z]^(1 / (1 - gamma)) + B(s, a, z) ]^(1 - rho) }^theta`,
///
/// minimized. `B` is the model's gamble utility table (zero when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct NarrowFraming {
    params: NarrowFramingParams,
    theta: f64,
    regime: EzRegime,
}

/// Result of the lower-solution search.
#[derive(Debug, Clone, PartialEq)]
pub struct NfLowerSolution {
    /// Accepted root, `phi(d_star) > PHI_TOL * max(1, d_star)`.
    pub d_star: f64,
    /// Left end of the search interval.
    pub d_lower: f64,
    /// `phi(d_star)`.
    pub phi_at_root: f64,
    pub bracket: Bracket,
}

/// Reward and gamble bounds entering the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfBounds {
    pub m: f64,
    pub big_m: f64,
    pub l: f64,
    pub big_l: f64,
}

impl NfBounds {
    pub fn of(model: &ModelSpec) -> Self {
        let (m, big_m) = model.reward_range();
        let (l, big_l) = if model.has_gamble_utility() {
            model.gamble_range()
        } else {
            (0.0, 0.0)
        };
        Self { m, big_m, l, big_l }
    }
}

impl NarrowFraming {
    pub fn new(params: NarrowFramingParams) -> Result<Self> {
        check_beta(params.beta)?;
        let regime = EzRegime::classify(params.rho, params.gamma)?;
        if regime == EzRegime::ConvexMax {
            return Err(DpError::Regime(format!(
                "narrow framing needs rho < 1 < gamma or 1 < rho < gamma, got rho = {}, gamma = {}",
                params.rho, params.gamma
            )));
        }
        Ok(Self {
            params,
            theta: (1.0 - params.gamma) / (1.0 - params.rho),
            regime,
        })
    }

    pub fn params(&self) -> &NarrowFramingParams {
        &self.params
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn regime(&self) -> EzRegime {
        self.regime
    }

    /// `b = beta^(1 / rho)`.
    fn b(&self) -> f64 {
        self.params.beta.powf(1.0 / self.params.rho)
    }

    /// The reward bound entering `phi`: `M` when `rho < 1`, `m` when `rho > 1`.
    fn phi_reward(&self, bounds: &NfBounds) -> f64 {
        match self.regime {
            EzRegime::ConcaveMin => bounds.big_m,
            _ => bounds.m,
        }
    }

    /// `phi(d) = ((d^(1 - rho) - K) / beta)^(1 / (1 - rho)) - d - L`, with `K` the regime's reward bound.
    pub fn phi(&self, bounds: &NfBounds, d: f64) -> f64 {
        let p = 1.0 - self.params.rho;
        ((d.powf(p) - self.phi_reward(bounds)) / self.params.beta).powf(1.0 / p) - d - bounds.big_l
    }

    /// Left end of the search, `[K / (1 - b)]^(1 / (1 - rho))`.
    pub fn d_lower(&self, bounds: &NfBounds) -> f64 {
        (self.phi_reward(bounds) / (1.0 - self.b())).powf(1.0 / (1.0 - self.params.rho))
    }

    /// Scans upward from `d_lower` until `phi > PHI_TOL * max(1, d)`, refines by bisection, and
    /// builds the bracket with `w1 = d_star^(1 - gamma)`.
    pub fn find_lower_solution(&self, model: &ModelSpec) -> Result<NfLowerSolution> {
        self.validate(model)?;
        let bounds = NfBounds::of(model);
        let d_lower = self.d_lower(&bounds);
        let accept = |d: f64| {
            let f = self.phi(&bounds, d);
            // Relative to d: for d near 1e8 an absolute threshold drowns in rounding.
            f > PHI_TOL * d.max(1.0) && f.is_finite()
        };

        let mut lo = d_lower;
        let mut hi = None;
        match self.regime {
            EzRegime::ConcaveMin => {
                let mut step = 0.01 * d_lower.max(1.0);
                for _ in 0..SCAN_LIMIT {
                    let d = lo + step;
                    if accept(d) {
                        hi = Some(d);
                        break;
                    }
                    lo = d;
                    step *= 2.0;
                }
            }
            _ => {
                // phi blows up as d approaches m^(1 / (1 - rho)) from below.
                let cap = bounds.m.powf(1.0 / (1.0 - self.params.rho));
                for _ in 0..SCAN_LIMIT {
                    let d = lo + 0.5 * (cap - lo);
                    if d <= lo {
                        break;
                    }
                    if accept(d) {
                        hi = Some(d);
                        break;
                    }
                    lo = d;
                }
            }
        }
        let mut hi = hi.ok_or_else(|| {
            DpError::SearchFailure(format!("phi stayed below {PHI_TOL} while scanning from d = {d_lower}"))
        })?;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if accept(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let d_star = hi;
        let bracket = self.bracket_from_root(model, &bounds, d_star)?;
        Ok(NfLowerSolution {
            d_star,
            d_lower,
            phi_at_root: self.phi(&bounds, d_star),
            bracket,
        })
    }

    fn bracket_from_root(&self, model: &ModelSpec, bounds: &NfBounds, d_star: f64) -> Result<Bracket> {
        let NarrowFramingParams { beta, rho, gamma } = self.params;
        let theta = self.theta;
        let w1 = d_star.powf(1.0 - gamma);
        let upper_reward = match self.regime {
            EzRegime::ConcaveMin => bounds.m,
            _ => bounds.big_m,
        };
        let w2 = (upper_reward / (1.0 - self.b())).powf(theta);
        let floor = (self.phi_reward(bounds) + beta * (d_star + bounds.big_l).powf(1.0 - rho)).powf(theta);
        let eps = floor - w1;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(DpError::SearchFailure(format!(
                "root d = {d_star} gives a non-positive margin {eps}"
            )));
        }
        Bracket::constant(model.n_states(), w1, w2, eps, StrictSide::Lower)
    }
}

/// Free-function form of [`NarrowFraming::find_lower_solution`].
pub fn find_nf_lower_solution(agg: &NarrowFraming, model: &ModelSpec) -> Result<NfLowerSolution> {
    agg.find_lower_solution(model)
}

impl Aggregator for NarrowFraming {
    fn name(&self) -> &str {
        "narrow-framing"
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
        let NarrowFramingParams { beta, rho, gamma } = self.params;
        let inner = c.powf(1.0 / (1.0 - gamma)) + model.gamble_at(state, action);
        let base = model.reward_at(state, action) + beta * inner.powf(1.0 - rho);
        if !(base > 0.0) {
            return Err(domain(state, format!("aggregate {base} is not positive")));
        }
        Ok(base.powf(self.theta))
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        require_positive_reward(model, self.name())
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        Ok(self.find_lower_solution(model)?.bracket)
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        power_inverse(v_hat, 1.0 - self.params.gamma)
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        power_transform(v, 1.0 - self.params.gamma)
    }
}
