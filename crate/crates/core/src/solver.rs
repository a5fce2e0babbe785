//! Policy operators, Bellman operators and fixed-point iteration.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::aggregator::{check_len, Aggregator, PARALLEL_WORK_THRESHOLD};
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec};
use crate::value::{sup_norm_distance, weighted_distance, Bracket, Direction, Policy, ValueFunction};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Residual ratios entering the contraction estimate.
pub const CONTRACTION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; defaults to `w1` (max) or `w2` (min).
    pub init: Option<ValueFunction>,
    /// When set, residuals are `max |u - v| / weight`.
    pub weights: Option<Vec<f64>>,
    /// Reject iterates that leave the bracket.
    pub enforce_bracket: bool,
    /// Return an unconverged report instead of an error.
    pub allow_nonconvergence: bool,
    /// Stop when the residual is at most `tol * max |v|` rather than `tol`.
    /// Transformed values can be of order 1e-8 (ambiguity) or 1e4, where an
    /// absolute tolerance is either meaningless or needlessly strict.
    pub relative: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: None,
            weights: None,
            enforce_bracket: true,
            allow_nonconvergence: false,
            relative: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn relative(mut self) -> Self {
        self.relative = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub fixed_point: ValueFunction,
    pub policy: Policy,
    /// `||v_{n+1} - v_n||` per iteration.
    pub residuals: Vec<f64>,
    /// Geometric mean of the last residual ratios; `None` with fewer than two positive residuals.
    pub contraction_estimate: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed: Duration,
}

impl SolveReport {
    /// `residual[n + 1] / residual[n]` for consecutive positive residuals.
    pub fn residual_ratios(&self) -> Vec<f64> {
        residual_ratios(&self.residuals)
    }
}

pub fn residual_ratios(residuals: &[f64]) -> Vec<f64> {
    residuals
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect()
}

/// Geometric mean of the last [`CONTRACTION_WINDOW`] residual ratios.
pub fn contraction_estimate(residuals: &[f64]) -> Option<f64> {
    let ratios = residual_ratios(residuals);
    if ratios.is_empty() {
        return None;
    }
    let tail = &ratios[ratios.len().saturating_sub(CONTRACTION_WINDOW)..];
    let mean_log = tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64;
    Some(mean_log.exp())
}

/// A model paired with an aggregator and the bracket `[w1, w2]` of candidate values.
#[derive(Debug, Clone)]
pub struct Problem<'m, A> {
    model: &'m ModelSpec,
    agg: A,
    bracket: Bracket,
}

impl<'m, A: Aggregator> Problem<'m, A> {
    /// Validates the model against the family and builds the family's bracket.
    pub fn new(model: &'m ModelSpec, agg: A) -> Result<Self> {
        agg.validate(model)?;
        let bracket = agg.bracket(model)?;
        Ok(Self { model, agg, bracket })
    }

    /// Uses a caller-supplied bracket.
    pub fn with_bracket(model: &'m ModelSpec, agg: A, bracket: Bracket) -> Result<Self> {
        if bracket.len() != model.n_states() {
            return Err(DpError::Shape {
                expected: model.n_states(),
                found: bracket.len(),
            });
        }
        Ok(Self { model, agg, bracket })
    }

    pub fn model(&self) -> &'m ModelSpec {
        self.model
    }

    pub fn aggregator(&self) -> &A {
        &self.agg
    }

    pub fn bracket(&self) -> &Bracket {
        &self.bracket
    }

    pub fn direction(&self) -> Direction {
        self.agg.direction()
    }

    /// `T_sigma v`.
    pub fn apply_sigma(&self, sigma: &Policy, v: &[f64]) -> Result<ValueFunction> {
        sigma.check_feasible(self.model)?;
        self.bracket.check_contains(v)?;
        Ok(self.sweep(v, Some(sigma))?.0)
    }

    /// `T v` (or `S v` for minimization) and the greedy policy attaining it.
    pub fn apply_bellman(&self, v: &[f64]) -> Result<(ValueFunction, Policy)> {
        self.bracket.check_contains(v)?;
        self.sweep(v, None)
    }

    /// A `v`-greedy policy, lowest action index on ties.
    pub fn greedy_policy(&self, v: &[f64]) -> Result<Policy> {
        Ok(self.apply_bellman(v)?.1)
    }

    /// Value function iteration.
    pub fn solve(&self, opts: &SolveOptions) -> Result<SolveReport> {
        self.iterate(opts, None)
    }

    /// `v_sigma` by iterating `T_sigma` from the bracket endpoint.
    pub fn solve_sigma(&self, sigma: &Policy, opts: &SolveOptions) -> Result<ValueFunction> {
        sigma.check_feasible(self.model)?;
        Ok(self.iterate(opts, Some(sigma))?.fixed_point)
    }

    /// Full report for `T_sigma` iteration.
    pub fn solve_sigma_report(&self, sigma: &Policy, opts: &SolveOptions) -> Result<SolveReport> {
        sigma.check_feasible(self.model)?;
        self.iterate(opts, Some(sigma))
    }

    fn iterate(&self, opts: &SolveOptions, sigma: Option<&Policy>) -> Result<SolveReport> {
        if !(opts.tol > 0.0) {
            return Err(DpError::Parameter(format!("tol must be positive, got {}", opts.tol)));
        }
        let start = Instant::now();
        let mut v = match &opts.init {
            Some(v0) => v0.values().to_vec(),
            None => self.bracket.start(self.direction()).into_inner(),
        };
        check_len(self.model, &v)?;
        if opts.enforce_bracket {
            self.bracket.check_contains(&v)?;
        }
        if let Some(w) = &opts.weights {
            check_len(self.model, w)?;
        }
        let distance = |a: &[f64], b: &[f64]| match &opts.weights {
            Some(w) => weighted_distance(a, b, w),
            None => sup_norm_distance(a, b),
        };

        let mut residuals = Vec::new();
        let mut converged = false;
        while residuals.len() < opts.max_iter {
            let (next, _) = self.sweep(&v, sigma)?;
            let next = next.into_inner();
            if opts.enforce_bracket {
                self.bracket.check_contains(&next)?;
            }
            let r = distance(&next, &v)?;
            residuals.push(r);
            v = next;
            let threshold = match opts.relative {
                true => opts.tol * v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
                false => opts.tol,
            };
            if r <= threshold {
                converged = true;
                break;
            }
        }
        if !converged && !opts.allow_nonconvergence {
            return Err(DpError::NonConvergence { residuals });
        }
        let policy = match sigma {
            Some(s) => s.clone(),
            None => self.sweep(&v, None)?.1,
        };
        Ok(SolveReport {
            fixed_point: ValueFunction::new(v),
            policy,
            contraction_estimate: contraction_estimate(&residuals),
            iterations: residuals.len(),
            residuals,
            converged,
            elapsed: start.elapsed(),
        })
    }

    /// One pass over all states. With `sigma`, only `sigma(x)` is evaluated.
    fn sweep(&self, v: &[f64], sigma: Option<&Policy>) -> Result<(ValueFunction, Policy)> {
        let model = self.model;
        let direction = self.direction();
        let cont = self.agg.continuation(model, v)?;
        let best_at = |x: usize| -> Result<(f64, ActionIndex)> {
            let (s, z) = model.split(x);
            let value_of = |a: ActionIndex| {
                let c = cont[model.state_index(model.successor(s, a), z)];
                self.agg.combine(model, x, a, c)
            };
            if let Some(sigma) = sigma {
                let a = sigma[x];
                return Ok((value_of(a)?, a));
            }
            let mut best: Option<(f64, ActionIndex)> = None;
            for a in model.feasible_actions(x) {
                let h = value_of(a)?;
                match best {
                    Some((b, _)) if !direction.improves(h, b) => {}
                    _ => best = Some((h, a)),
                }
            }
            // Every state has a feasible action by construction.
            Ok(best.expect("state without feasible action"))
        };
        let pairs: Vec<(f64, ActionIndex)> = if model.n_states() * model.n_z() >= PARALLEL_WORK_THRESHOLD {
            (0..model.n_states())
                .into_par_iter()
                .map(best_at)
                .collect::<Result<_>>()?
        } else {
            (0..model.n_states()).map(best_at).collect::<Result<_>>()?
        };
        let (values, actions): (Vec<f64>, Vec<ActionIndex>) = pairs.into_iter().unzip();
        Ok((ValueFunction::new(values), Policy::new(actions)))
    }
}

/// `T_sigma v` with the aggregator's own bracket.
pub fn apply_sigma_operator<A: Aggregator>(
    model: &ModelSpec,
    agg: A,
    sigma: &Policy,
    v: &[f64],
) -> Result<ValueFunction> {
    Problem::new(model, agg)?.apply_sigma(sigma, v)
}

/// `v_sigma` with the aggregator's own bracket.
pub fn solve_sigma_value<A: Aggregator>(
    model: &ModelSpec,
    agg: A,
    sigma: &Policy,
    tol: f64,
    max_iter: usize,
) -> Result<ValueFunction> {
    let opts = SolveOptions::default().with_tol(tol).with_max_iter(max_iter);
    Problem::new(model, agg)?.solve_sigma(sigma, &opts)
}

pub fn apply_bellman<A: Aggregator>(model: &ModelSpec, agg: A, v: &[f64]) -> Result<(ValueFunction, Policy)> {
    Problem::new(model, agg)?.apply_bellman(v)
}

pub fn value_function_iteration<A: Aggregator>(model: &ModelSpec, agg: A, opts: &SolveOptions) -> Result<SolveReport> {
    Problem::new(model, agg)?.solve(opts)
}

pub fn greedy_policy<A: Aggregator>(model: &ModelSpec, agg: A, v: &[f64]) -> Result<Policy> {
    Problem::new(model, agg)?.greedy_policy(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::conjugate_aggregator;
    use crate::families::testing::{constant_model, random_positive_model, two_state_model};
    use crate::families::*;
    use crate::model::ModelBuilder;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn additive(beta: f64) -> Additive {
        Additive::new(AdditiveParams {
            beta,
            eps_margin: Some(0.1),
        })
        .unwrap()
    }

    fn policy(a: &[usize]) -> Policy {
        Policy::new(a.to_vec())
    }

    #[test]
    fn sigma_operator_examples() {
        let model = constant_model(3, 1.0);
        let out = apply_sigma_operator(&model, additive(0.9), &policy(&[2, 0, 1]), &[10.0; 3]).unwrap();
        assert!(out.iter().all(|x| (x - 10.0).abs() < 1e-12));

        let ez = EpsteinZin::from_theta(0.9, 0.5, None).unwrap();
        let model = constant_model(2, 0.1);
        let out = apply_sigma_operator(&model, &ez, &policy(&[0, 1]), &[1.0, 1.0]).unwrap();
        assert!(out.iter().all(|x| (x - 1.0).abs() < 1e-14));

        let model = two_state_model();
        let out = apply_sigma_operator(&model, additive(0.5), &policy(&[1, 0]), &[0.0, 0.0]).unwrap();
        assert_eq!(out.values(), &[1.0, 2.0]);
    }

    #[test]
    fn sigma_operator_errors() {
        let model = two_state_model();
        let infeasible = ModelBuilder::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0])
            .kernel(vec![vec![1.0]])
            .reward(vec![vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![0.0]]])
            .feasible(vec![vec![true, false], vec![true, true]])
            .build()
            .unwrap();
        assert!(matches!(
            apply_sigma_operator(&infeasible, additive(0.5), &policy(&[1, 0]), &[0.0, 0.0]),
            Err(DpError::Infeasible { state: 0, action: 1 })
        ));
        assert!(matches!(
            apply_sigma_operator(&model, additive(0.5), &policy(&[1, 0]), &[0.0, 100.0]),
            Err(DpError::OutsideBracket { state: 1, .. })
        ));
    }

    #[test]
    fn sigma_values_by_linear_algebra() {
        let model = two_state_model();
        let v = solve_sigma_value(&model, additive(0.5), &policy(&[1, 0]), 1e-12, 10_000).unwrap();
        assert_relative_eq!(v[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(v[1], 4.0, epsilon = 1e-10);
        let v = solve_sigma_value(&model, additive(0.5), &policy(&[1, 1]), 1e-12, 10_000).unwrap();
        assert_relative_eq!(v[0], 4.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(v[1], 2.0 / 3.0, epsilon = 1e-10);

        let flat = constant_model(3, 1.0);
        let v = solve_sigma_value(&flat, additive(0.9), &policy(&[1, 2, 0]), 1e-12, 10_000).unwrap();
        assert!(v.iter().all(|x| (x - 10.0).abs() < 1e-10));
    }

    #[test]
    fn sigma_solve_reports_nonconvergence() {
        let model = constant_model(2, 1.0);
        let err = solve_sigma_value(&model, additive(0.9), &policy(&[0, 1]), 1e-14, 5).unwrap_err();
        match err {
            DpError::NonConvergence { residuals } => assert_eq!(residuals.len(), 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bellman_examples() {
        let model = two_state_model();
        let (v, p) = apply_bellman(&model, additive(0.5), &[0.0, 0.0]).unwrap();
        assert_eq!(v.values(), &[1.0, 2.0]);
        assert_eq!(p.actions(), &[1, 0]);

        let report = value_function_iteration(&model, additive(0.5), &SolveOptions::default()).unwrap();
        let (tv, _) = apply_bellman(&model, additive(0.5), &report.fixed_point).unwrap();
        assert!(sup_norm_distance(&tv, &report.fixed_point).unwrap() <= 1e-10);
    }

    #[test]
    fn single_action_bellman_is_sigma_operator() {
        let model = ModelBuilder::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0])
            .kernel(vec![vec![0.3, 0.7], vec![0.6, 0.4]])
            .reward(vec![vec![vec![0.5, 1.0]], vec![vec![0.2, 0.8]]])
            .successor(vec![vec![1], vec![0]])
            .build()
            .unwrap();
        let agg = additive(0.8);
        let v = [0.3, -0.2, 1.0, 0.4];
        let (tv, p) = apply_bellman(&model, &agg, &v).unwrap();
        assert_eq!(p.actions(), &[0, 0, 0, 0]);
        let sv = apply_sigma_operator(&model, &agg, &p, &v).unwrap();
        assert_eq!(tv, sv);
        assert_eq!(greedy_policy(&model, &agg, &v).unwrap(), p);
    }

    #[test]
    fn vfi_examples() {
        let model = two_state_model();
        let report = value_function_iteration(&model, additive(0.5), &SolveOptions::default()).unwrap();
        assert_relative_eq!(report.fixed_point[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(report.fixed_point[1], 4.0, epsilon = 1e-9);
        assert_eq!(report.policy.actions(), &[1, 0]);
        assert!(report.converged);

        let flat = constant_model(3, 1.0);
        let report = value_function_iteration(&flat, additive(0.9), &SolveOptions::default()).unwrap();
        assert!(report.fixed_point.iter().all(|x| (x - 10.0).abs() < 1e-9));
        let rate = report.contraction_estimate.unwrap();
        assert!((rate - 0.9).abs() <= 0.01, "rate {rate}");

        let ez = EpsteinZin::from_theta(0.9, 0.5, None).unwrap();
        let model = constant_model(2, 0.1);
        let report = value_function_iteration(&model, ez, &SolveOptions::default()).unwrap();
        assert!(report.fixed_point.iter().all(|x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn residuals_are_positive_until_the_last() {
        let model = random_positive_model(3, 2, 4);
        let report = value_function_iteration(&model, additive(0.9), &SolveOptions::default()).unwrap();
        let n = report.residuals.len();
        assert!(report.residuals[..n - 1].iter().all(|r| *r > 0.0));
        assert!(*report.residuals.last().unwrap() <= 1e-10);
        assert_eq!(report.iterations, n);
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let model = constant_model(3, 0.5);
        let p = greedy_policy(&model, additive(0.9), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.actions(), &[0, 0, 0]);
    }

    #[test]
    fn greedy_at_fixed_point() {
        let model = two_state_model();
        let report = value_function_iteration(&model, additive(0.5), &SolveOptions::default()).unwrap();
        let p = greedy_policy(&model, additive(0.5), &report.fixed_point).unwrap();
        assert_eq!(p.actions(), &[1, 0]);
    }

    #[test]
    fn conjugate_examples() {
        let model = random_positive_model(3, 1, 21);
        let rs = RiskSensitive::new(RiskSensitiveParams {
            beta: 0.9,
            theta: 1.0,
            delta: None,
        })
        .unwrap();
        let direct = value_function_iteration(&model, &rs, &SolveOptions::default().with_tol(1e-14)).unwrap();
        let conj = conjugate_aggregator(&rs).unwrap();
        let via = value_function_iteration(&model, &conj, &SolveOptions::default().with_tol(1e-14)).unwrap();
        let back = via.fixed_point.negated();
        assert!(sup_norm_distance(&back, &direct.fixed_point).unwrap() <= 1e-12);
        assert_eq!(via.policy, direct.policy);

        assert!(matches!(conjugate_aggregator(additive(0.9)), Err(DpError::Direction)));
    }

    #[test]
    fn contraction_estimate_windows() {
        assert_eq!(contraction_estimate(&[1.0]), None);
        let r: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        assert_relative_eq!(contraction_estimate(&r).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn threaded_sweep_matches_serial() {
        // Large enough to cross the parallel threshold.
        let model = crate::synth::banded_model(130, 130, 2, 3);
        let agg = additive(0.9);
        let p = Problem::new(&model, &agg).unwrap();
        let v: Vec<f64> = (0..model.n_states()).map(|i| (i % 7) as f64 * 0.1).collect();
        let (par, _) = p.apply_bellman(&v).unwrap();
        let cont = (0..model.n_states())
            .map(|i| {
                let (y, z) = model.split(i);
                agg.continuation_at(&model, y, z, &v).unwrap()
            })
            .collect::<Vec<_>>();
        for x in 0..model.n_states() {
            let (s, z) = model.split(x);
            let best = model
                .feasible_actions(x)
                .map(|a| {
                    agg.combine(&model, x, a, cont[model.state_index(model.successor(s, a), z)])
                        .unwrap()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(par[x], best);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bellman_is_monotone(seed in 0u64..1000, raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 6)) {
            let model = random_positive_model(3, 2, seed);
            let rs = RiskSensitive::new(RiskSensitiveParams { beta: 0.9, theta: 0.7, delta: None }).unwrap();
            let p = Problem::new(&model, &rs).unwrap();
            let (lo, hi) = (p.bracket().w1().to_vec(), p.bracket().w2().to_vec());
            let v: Vec<f64> = raw.iter().enumerate().map(|(i, (a, _))| lo[i] + a * (hi[i] - lo[i])).collect();
            let w: Vec<f64> = raw.iter().enumerate().map(|(i, (_, b))| v[i] + b * (hi[i] - v[i])).collect();
            let (tv, _) = p.apply_bellman(&v).unwrap();
            let (tw, _) = p.apply_bellman(&w).unwrap();
            for (a, b) in tv.iter().zip(tw.iter()) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn iterates_stay_in_bracket(seed in 0u64..1000, beta in 0.5f64..0.95) {
            let model = random_positive_model(3, 2, seed);
            let ez = EpsteinZin::new(EzParams { beta, rho: 0.5, gamma: 2.0, delta: None, regime: None }).unwrap();
            let p = Problem::new(&model, &ez).unwrap();
            let mut v = p.bracket().w2().to_vec();
            for _ in 0..50 {
                let (next, _) = p.apply_bellman(&v).unwrap();
                prop_assert!(p.bracket().contains(&next));
                v = next.into_inner();
            }
        }

        #[test]
        fn bellman_principle(seed in 0u64..1000) {
            let model = random_positive_model(3, 2, seed);
            let agg = additive(0.85);
            let p = Problem::new(&model, &agg).unwrap();
            let opts = SolveOptions::default();
            let report = p.solve(&opts).unwrap();
            let v_sigma = p.solve_sigma(&report.policy, &opts).unwrap();
            prop_assert!(sup_norm_distance(&v_sigma, &report.fixed_point).unwrap() <= 10.0 * opts.tol);
        }
    }
}
