use serde::{Deserialize, Serialize};

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::value::{Bracket, Direction, StrictSide};

use super::{check_beta, default_delta, domain, power_inverse, power_transform, require_positive_reward};

/// The three parameter regimes with `rho < gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EzRegime {
    /// `rho < gamma < 1`, so `theta` lies in `(0, 1)`; maximization.
    ConvexMax,
    /// `rho < 1 < gamma`, so `theta < 0`; minimization.
    ConcaveMin,
    /// `1 < rho < gamma`, so `theta > 1`; minimization.
    ConcaveMinThetaAboveOne,
}

impl EzRegime {
    /// Regime implied by `(rho, gamma)`; errors outside the covered cases.
    pub fn classify(rho: f64, gamma: f64) -> Result<Self> {
        if !(rho > 0.0 && gamma > 0.0) {
            return Err(DpError::Parameter(format!(
                "rho and gamma must be positive, got rho = {rho}, gamma = {gamma}"
            )));
        }
        if rho == 1.0 {
            return Err(DpError::Regime(
                "rho = 1 is only supported inside the smooth ambiguity family".to_string(),
            ));
        }
        if gamma == 1.0 {
            return Err(DpError::Regime("gamma = 1 is not supported".to_string()));
        }
        if rho >= gamma {
            return Err(DpError::Regime(format!(
                "only rho < gamma is covered, got rho = {rho}, gamma = {gamma}"
            )));
        }
        Ok(if gamma < 1.0 {
            EzRegime::ConvexMax
        } else if rho < 1.0 {
            EzRegime::ConcaveMin
        } else {
            EzRegime::ConcaveMinThetaAboveOne
        })
    }

    /// Regime implied by `theta` alone.
    pub fn from_theta(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta <= 1.0 {
            Ok(EzRegime::ConvexMax)
        } else if theta < 0.0 {
            Ok(EzRegime::ConcaveMin)
        } else if theta > 1.0 {
            Ok(EzRegime::ConcaveMinThetaAboveOne)
        } else {
            Err(DpError::Parameter(format!("theta must be non-zero, got {theta}")))
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            EzRegime::ConvexMax => Direction::Max,
            _ => Direction::Min,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EzRegime::ConvexMax => "convex-max",
            EzRegime::ConcaveMin => "concave-min",
            EzRegime::ConcaveMinThetaAboveOne => "concave-min-theta-above-one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EzParams {
    pub beta: f64,
    /// Inverse elasticity of intertemporal substitution.
    pub rho: f64,
    /// Relative risk aversion.
    pub gamma: f64,
    /// Bracket slack; `None` picks the default for the regime.
    pub delta: Option<f64>,
    /// Expected regime; checked against `(rho, gamma)` when given.
    pub regime: Option<EzRegime>,
}

/// Epstein-Zin aggregator in the transformed space `v_hat = v^(1 - gamma)`:
///
/// `H((s, z), a, v) = { r(s, a, z) + beta * E[v(y, z') | z]^(1 / theta) }^theta`
///
/// with `theta = (1 - gamma) / (1 - rho)`. The model's reward table holds the
/// flow term `r = (1 - beta) F^(1 - rho)` directly; see [`flow_utility`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsteinZin {
    beta: f64,
    theta: f64,
    gamma: Option<f64>,
    regime: EzRegime,
    delta: Option<f64>,
}

/// `r = (1 - beta) * F^(1 - rho)` for a positive consumption flow `F`.
pub fn flow_utility(consumption: f64, beta: f64, rho: f64) -> f64 {
    (1.0 - beta) * consumption.powf(1.0 - rho)
}

impl EpsteinZin {
    pub fn new(params: EzParams) -> Result<Self> {
        check_beta(params.beta)?;
        let regime = EzRegime::classify(params.rho, params.gamma)?;
        if let Some(declared) = params.regime {
            if declared != regime {
                return Err(DpError::Regime(format!(
                    "declared regime {} does not match rho = {}, gamma = {} (which give {})",
                    declared.label(),
                    params.rho,
                    params.gamma,
                    regime.label()
                )));
            }
        }
        check_delta(params.delta)?;
        Ok(Self {
            beta: params.beta,
            theta: (1.0 - params.gamma) / (1.0 - params.rho),
            gamma: Some(params.gamma),
            regime,
            delta: params.delta,
        })
    }

    /// Builds the aggregator from `theta` directly. `theta = 1` gives the
    /// additive recursion on `r`. Unit conversion is unavailable until
    /// [`EpsteinZin::with_gamma`] is called.
    pub fn from_theta(beta: f64, theta: f64, delta: Option<f64>) -> Result<Self> {
        check_beta(beta)?;
        check_delta(delta)?;
        Ok(Self {
            beta,
            theta,
            gamma: None,
            regime: EzRegime::from_theta(theta)?,
            delta,
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn regime(&self) -> EzRegime {
        self.regime
    }

    /// Slack actually used for `model`.
    pub fn delta_for(&self, model: &ModelSpec) -> f64 {
        let (m, big_m) = model.reward_range();
        self.delta.unwrap_or(match self.regime {
            EzRegime::ConcaveMinThetaAboveOne => 0.1 * m,
            _ => default_delta(big_m),
        })
    }

    /// Constant fixed point `(c / (1 - beta))^theta` under a constant reward `c`.
    pub fn constant_fixed_point(&self, c: f64) -> f64 {
        (c / (1.0 - self.beta)).powf(self.theta)
    }

    fn value_exponent(&self) -> Result<f64> {
        self.gamma
            .map(|g| 1.0 - g)
            .ok_or_else(|| DpError::Parameter("gamma is unknown; unit conversion unavailable".into()))
    }
}

fn check_delta(delta: Option<f64>) -> Result<()> {
    match delta {
        Some(d) if !(d > 0.0) => Err(DpError::Parameter(format!("delta must be positive, got {d}"))),
        _ => Ok(()),
    }
}

impl Aggregator for EpsteinZin {
    fn name(&self) -> &str {
        "epstein-zin"
    }

    fn direction(&self) -> Direction {
        self.regime.direction()
    }

    fn continuation_at(&self, model: &ModelSpec, y: usize, z: usize, v: &[f64]) -> Result<f64> {
        let c = model.expect(y, z, v);
        if c < 0.0 || (c == 0.0 && self.theta < 0.0) || c.is_nan() {
            return Err(domain(
                model.state_index(y, z),
                format!("continuation expectation {c} is outside the positive cone"),
            ));
        }
        Ok(c)
    }

    fn combine(&self, model: &ModelSpec, state: StateIndex, action: ActionIndex, c: f64) -> Result<f64> {
        let base = model.reward_at(state, action) + self.beta * c.powf(1.0 / self.theta);
        if !(base > 0.0) && !(base == 0.0 && self.theta > 0.0) {
            return Err(domain(state, format!("aggregate {base} is not positive")));
        }
        Ok(base.powf(self.theta))
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        match self.regime {
            EzRegime::ConvexMax => super::require_nonnegative_reward(model, self.name()),
            _ => require_positive_reward(model, self.name()),
        }
    }

    fn bracket(&self, model: &ModelSpec) -> Result<Bracket> {
        self.validate(model)?;
        let (m, big_m) = model.reward_range();
        let delta = self.delta_for(model);
        let beta = self.beta;
        let theta = self.theta;
        let n = model.n_states();
        match self.regime {
            EzRegime::ConvexMax => {
                let top = (big_m + delta) / (1.0 - beta);
                let w2 = top.powf(theta);
                let eps = w2 - (top - delta).powf(theta);
                Bracket::constant(n, (m / (1.0 - beta)).powf(theta), w2, eps, StrictSide::Upper)
            }
            EzRegime::ConcaveMin => {
                let top = (big_m + delta) / (1.0 - beta);
                let w1 = top.powf(theta);
                let eps = (top - delta).powf(theta) - w1;
                Bracket::constant(n, w1, (m / (1.0 - beta)).powf(theta), eps, StrictSide::Lower)
            }
            EzRegime::ConcaveMinThetaAboveOne => {
                if delta >= m {
                    return Err(DpError::Parameter(format!(
                        "delta = {delta} must be below the minimum reward m = {m}"
                    )));
                }
                let bottom = (m - delta) / (1.0 - beta);
                let w1 = bottom.powf(theta);
                let eps = (bottom + delta).powf(theta) - w1;
                Bracket::constant(n, w1, (big_m / (1.0 - beta)).powf(theta), eps, StrictSide::Lower)
            }
        }
    }

    fn to_original_units(&self, v_hat: &[f64]) -> Result<Vec<f64>> {
        power_inverse(v_hat, self.value_exponent()?)
    }

    fn from_original_units(&self, v: &[f64]) -> Result<Vec<f64>> {
        power_transform(v, self.value_exponent()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::testing::{constant_model, random_positive_model};
    use crate::families::{Additive, AdditiveParams};
    use approx::assert_relative_eq;

    fn ez(rho: f64, gamma: f64) -> EpsteinZin {
        EpsteinZin::new(EzParams {
            beta: 0.9,
            rho,
            gamma,
            delta: None,
            regime: None,
        })
        .unwrap()
    }

    #[test]
    fn regime_classification() {
        assert_eq!(EzRegime::classify(0.5, 0.8).unwrap(), EzRegime::ConvexMax);
        assert_eq!(EzRegime::classify(0.5, 2.0).unwrap(), EzRegime::ConcaveMin);
        assert_eq!(EzRegime::classify(1.5, 3.0).unwrap(), EzRegime::ConcaveMinThetaAboveOne);
        assert!(matches!(EzRegime::classify(1.0, 2.0), Err(DpError::Regime(_))));
        assert!(matches!(EzRegime::classify(2.0, 1.5), Err(DpError::Regime(_))));
        assert_eq!(ez(1.5, 3.0).theta(), 4.0);
    }

    #[test]
    fn mislabeled_regime_is_rejected() {
        let err = EpsteinZin::new(EzParams {
            beta: 0.9,
            rho: 0.5,
            gamma: 2.0,
            delta: None,
            regime: Some(EzRegime::ConvexMax),
        })
        .unwrap_err();
        assert!(matches!(err, DpError::Regime(_)));
    }

    #[test]
    fn eval_constant_fixed_point() {
        let model = constant_model(3, 0.1);
        let agg = EpsteinZin::from_theta(0.9, 0.5, None).unwrap();
        assert_relative_eq!(agg.eval(&model, 1, 2, &[1.0; 3]).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eval_negative_theta_by_hand() {
        let model = constant_model(1, 0.1);
        let agg = EpsteinZin::from_theta(0.9, -2.0, None).unwrap();
        let h = agg.eval(&model, 0, 0, &[0.01]).unwrap();
        assert_relative_eq!(h, 9.1f64.powi(-2), epsilon = 1e-15);
        // 9.1^-2 = 0.0120758...; the quoted 0.012077 is only good to about 1e-5.
        assert_relative_eq!(h, 0.012077, epsilon = 2e-6);
    }

    #[test]
    fn theta_one_matches_additive() {
        let model = random_positive_model(3, 2, 11);
        let e = EpsteinZin::from_theta(0.9, 1.0, None).unwrap();
        let a = Additive::new(AdditiveParams {
            beta: 0.9,
            eps_margin: None,
        })
        .unwrap();
        let v: Vec<f64> = (0..model.n_states()).map(|i| 0.5 + i as f64).collect();
        for (x, act) in model.feasible_pairs() {
            let he = e.eval(&model, x, act, &v).unwrap();
            let ha = a.eval(&model, x, act, &v).unwrap();
            assert!((he - ha).abs() <= 1e-12, "{he} vs {ha}");
        }
    }

    #[test]
    fn nonpositive_expectation_is_a_domain_error() {
        let model = constant_model(1, 0.1);
        let agg = EpsteinZin::from_theta(0.9, -2.0, None).unwrap();
        assert!(matches!(agg.eval(&model, 0, 0, &[0.0]), Err(DpError::Domain { .. })));
    }

    #[test]
    fn bracket_convex_regime_by_formula() {
        let model = constant_model(2, 0.1);
        let agg = EpsteinZin::from_theta(0.9, 0.5, Some(0.05)).unwrap();
        let b = agg.bracket(&model).unwrap();
        assert_relative_eq!(b.w1()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(b.w2()[0], 1.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(b.w2()[0], 1.22474, epsilon = 1e-5);
        assert_eq!(b.strict_side(), StrictSide::Upper);
    }

    #[test]
    fn bracket_concave_regime_by_formula() {
        // m = 0.5, M = 2 over feasible pairs.
        let model = constant_model(2, 0.5)
            .with_reward(vec![vec![vec![0.5], vec![2.0]], vec![vec![1.0], vec![0.5]]])
            .unwrap();
        let agg = EpsteinZin::from_theta(0.95, -2.0, Some(0.1)).unwrap();
        let b = agg.bracket(&model).unwrap();
        assert_relative_eq!(b.w1()[0], 42f64.powi(-2), max_relative = 1e-12);
        assert_relative_eq!(b.w1()[0], 5.6689e-4, max_relative = 1e-4);
        assert_relative_eq!(b.w2()[0], 0.01, max_relative = 1e-12);
        assert_eq!(b.strict_side(), StrictSide::Lower);
    }

    #[test]
    fn bracket_collapses_with_delta() {
        let model = constant_model(1, 0.3);
        let agg = EpsteinZin::from_theta(0.9, -2.0, Some(1e-9)).unwrap();
        let b = agg.bracket(&model).unwrap();
        let fixed = agg.constant_fixed_point(0.3);
        assert_relative_eq!(b.w1()[0], fixed, max_relative = 1e-7);
        assert_relative_eq!(b.w2()[0], fixed, max_relative = 1e-12);
    }

    #[test]
    fn theta_above_one_needs_delta_below_m() {
        let model = constant_model(1, 0.3);
        let agg = EpsteinZin::from_theta(0.9, 2.0, Some(0.3)).unwrap();
        assert!(matches!(agg.bracket(&model), Err(DpError::Parameter(_))));
        let ok = EpsteinZin::from_theta(0.9, 2.0, None).unwrap();
        assert!(ok.bracket(&model).is_ok());
    }

    #[test]
    fn unit_conversion() {
        let agg = ez(0.5, 2.0);
        assert_relative_eq!(agg.to_original_units(&[0.25]).unwrap()[0], 4.0, epsilon = 1e-14);
        assert!(agg.to_original_units(&[0.0]).is_err());
        let bare = EpsteinZin::from_theta(0.9, 0.5, None).unwrap();
        assert!(bare.to_original_units(&[1.0]).is_err());
    }
}
