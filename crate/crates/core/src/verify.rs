//! Numerical certification of the operator assumptions and a brute-force oracle.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::model::{ActionIndex, ModelSpec, StateIndex};
use crate::solver::{Problem, SolveOptions};
use crate::value::{Bracket, Direction, Policy, StrictSide, ValueFunction};

/// Relative tolerance for every inequality check.
pub const CHECK_TOL: f64 = 1e-10;
/// Default number of random value functions.
pub const DEFAULT_SAMPLES: usize = 200;
/// Default cap on the number of enumerated policies.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// The curvature property required of `H` in its value argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Convex,
    Concave,
}

impl Shape {
    pub fn for_direction(direction: Direction) -> Self {
        match direction {
            Direction::Max => Shape::Convex,
            Direction::Min => Shape::Concave,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Monotone,
    Shape,
    LowerBound,
    UpperBound,
    StrictMargin,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Monotone => "monotonicity",
            CheckKind::Shape => "shape",
            CheckKind::LowerBound => "lower bound H(w1) >= w1",
            CheckKind::UpperBound => "upper bound H(w2) <= w2",
            CheckKind::StrictMargin => "strict margin",
        })
    }
}

/// Where the worst violation occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub check: CheckKind,
    pub state: StateIndex,
    pub action: ActionIndex,
    /// Sample number for randomized checks.
    pub sample: Option<usize>,
    /// The value-function pair involved (the bracket endpoint twice for bound checks).
    pub values: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub monotone_ok: bool,
    pub shape_ok: bool,
    pub lower_bound_ok: bool,
    pub upper_bound_ok: bool,
    pub strict_margin_ok: bool,
    /// Largest signed excess beyond tolerance; non-positive when every check passes.
    pub worst_violation: f64,
    pub witness: Option<Witness>,
    pub samples_used: usize,
    pub shape: Shape,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.monotone_ok && self.shape_ok && self.lower_bound_ok && self.upper_bound_ok && self.strict_margin_ok
    }

    /// Names of the failing checks.
    pub fn failures(&self) -> Vec<CheckKind> {
        [
            (self.monotone_ok, CheckKind::Monotone),
            (self.shape_ok, CheckKind::Shape),
            (self.lower_bound_ok, CheckKind::LowerBound),
            (self.upper_bound_ok, CheckKind::UpperBound),
            (self.strict_margin_ok, CheckKind::StrictMargin),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, k)| k)
        .collect()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "monotone        {}", mark(self.monotone_ok))?;
        writeln!(
            f,
            "{:<15} {}",
            match self.shape {
                Shape::Convex => "convex",
                Shape::Concave => "concave",
            },
            mark(self.shape_ok)
        )?;
        writeln!(f, "lower bound     {}", mark(self.lower_bound_ok))?;
        writeln!(f, "upper bound     {}", mark(self.upper_bound_ok))?;
        writeln!(f, "strict margin   {}", mark(self.strict_margin_ok))?;
        writeln!(f, "samples         {}", self.samples_used)?;
        write!(f, "worst violation {:e}", self.worst_violation)?;
        if let Some(w) = &self.witness {
            write!(f, " ({} at state {}, action {}", w.check, w.state, w.action)?;
            if let Some(s) = w.sample {
                write!(f, ", sample {s}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Configurable assumption check; see [`check_assumptions`] for the defaults.
pub struct AssumptionCheck<'a, A> {
    model: &'a ModelSpec,
    agg: A,
    bracket: &'a Bracket,
    n_samples: usize,
    seed: u64,
    shape: Option<Shape>,
}

impl<'a, A: Aggregator> AssumptionCheck<'a, A> {
    pub fn new(model: &'a ModelSpec, agg: A, bracket: &'a Bracket) -> Self {
        Self {
            model,
            agg,
            bracket,
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            shape: None,
        }
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Tests the given curvature instead of the one implied by the direction.
    pub fn shape(mut self, shape: Shape) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn run(self) -> Result<AssumptionReport> {
        let model = self.model;
        let b = self.bracket;
        if b.len() != model.n_states() {
            return Err(DpError::Shape {
                expected: model.n_states(),
                found: b.len(),
            });
        }
        let shape = self.shape.unwrap_or_else(|| Shape::for_direction(self.agg.direction()));
        let mut tally = Tally::default();
        let pairs: Vec<_> = model.feasible_pairs().collect();
        let (w1, w2) = (b.w1(), b.w2());

        for &(x, a) in &pairs {
            let h1 = self.agg.eval(model, x, a, w1)?;
            let h2 = self.agg.eval(model, x, a, w2)?;
            let endpoints = || (w1.to_vec(), w2.to_vec());
            tally.record(
                CheckKind::LowerBound,
                w1[x] - h1,
                scale(&[h1, w1[x]]),
                x,
                a,
                None,
                endpoints,
            );
            tally.record(
                CheckKind::UpperBound,
                h2 - w2[x],
                scale(&[h2, w2[x]]),
                x,
                a,
                None,
                endpoints,
            );
            let eps = b.epsilon();
            match b.strict_side() {
                StrictSide::Upper => tally.record(
                    CheckKind::StrictMargin,
                    h2 - (w2[x] - eps),
                    scale(&[h2, w2[x] - eps]),
                    x,
                    a,
                    None,
                    endpoints,
                ),
                StrictSide::Lower => tally.record(
                    CheckKind::StrictMargin,
                    (w1[x] + eps) - h1,
                    scale(&[h1, w1[x] + eps]),
                    x,
                    a,
                    None,
                    endpoints,
                ),
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = model.n_states();
        let draw = |rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]| -> Vec<f64> {
            (0..n).map(|i| lo[i] + rng.gen::<f64>() * (hi[i] - lo[i])).collect()
        };
        for sample in 0..self.n_samples {
            let v = draw(&mut rng, w1, w2);
            let v_up = draw(&mut rng, &v, w2);
            let w = draw(&mut rng, w1, w2);
            let lambda: f64 = rng.gen();
            let mix: Vec<f64> = v.iter().zip(&w).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
            for &(x, a) in &pairs {
                let hv = self.agg.eval(model, x, a, &v)?;
                let hv_up = self.agg.eval(model, x, a, &v_up)?;
                tally.record(
                    CheckKind::Monotone,
                    hv - hv_up,
                    scale(&[hv, hv_up]),
                    x,
                    a,
                    Some(sample),
                    || (v.clone(), v_up.clone()),
                );

                let hw = self.agg.eval(model, x, a, &w)?;
                let hmix = self.agg.eval(model, x, a, &mix)?;
                let chord = lambda * hv + (1.0 - lambda) * hw;
                let excess = match shape {
                    Shape::Convex => hmix - chord,
                    Shape::Concave => chord - hmix,
                };
                tally.record(
                    CheckKind::Shape,
                    excess,
                    scale(&[hmix, hv, hw]),
                    x,
                    a,
                    Some(sample),
                    || (v.clone(), w.clone()),
                );
            }
        }

        Ok(AssumptionReport {
            monotone_ok: tally.ok(CheckKind::Monotone),
            shape_ok: tally.ok(CheckKind::Shape),
            lower_bound_ok: tally.ok(CheckKind::LowerBound),
            upper_bound_ok: tally.ok(CheckKind::UpperBound),
            strict_margin_ok: tally.ok(CheckKind::StrictMargin),
            worst_violation: tally.worst,
            witness: tally.witness,
            samples_used: self.n_samples,
            shape,
        })
    }
}

fn scale(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Tally {
    worst: f64,
    witness: Option<Witness>,
    failed: Vec<CheckKind>,
}

impl Default for Tally {
    fn default() -> Self {
        Self {
            worst: f64::NEG_INFINITY,
            witness: None,
            failed: Vec::new(),
        }
    }
}

impl Tally {
    /// Records `raw` (positive means the inequality fails) less the tolerance at `scale`.
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        check: CheckKind,
        raw: f64,
        scale: f64,
        state: StateIndex,
        action: ActionIndex,
        sample: Option<usize>,
        values: impl FnOnce() -> (Vec<f64>, Vec<f64>),
    ) {
        let excess = if raw.is_nan() {
            f64::INFINITY
        } else {
            raw - CHECK_TOL * scale
        };
        if excess > 0.0 && !self.failed.contains(&check) {
            self.failed.push(check);
        }
        if excess > self.worst {
            self.worst = excess;
            self.witness = Some(Witness {
                check,
                state,
                action,
                sample,
                values: values(),
            });
        }
    }

    fn ok(&self, check: CheckKind) -> bool {
        !self.failed.contains(&check)
    }
}

/// Checks monotonicity, curvature, both bracket inequalities and the strict margin
/// with `n_samples` seeded random value functions inside the bracket.
pub fn check_assumptions<A: Aggregator>(
    model: &ModelSpec,
    agg: A,
    bracket: &Bracket,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    AssumptionCheck::new(model, agg, bracket)
        .samples(n_samples)
        .seed(seed)
        .run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub limit: usize,
    pub keep_table: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: crate::solver::DEFAULT_TOL,
            max_iter: crate::solver::DEFAULT_MAX_ITER,
            limit: ENUMERATION_LIMIT,
            keep_table: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Pointwise sup (max programs) or inf (min programs) of `v_sigma` over all policies.
    pub optimal_value: ValueFunction,
    /// The first policy in enumeration order whose value attains the optimum everywhere
    /// (within `1e-8` relative); per-state attaining actions if none does.
    pub optimal_policy: Policy,
    pub policies_enumerated: usize,
    pub per_policy_values: Option<Vec<(Policy, ValueFunction)>>,
}

/// Relative gap at which a policy value counts as attaining the optimum.
pub const ATTAIN_TOL: f64 = 1e-8;

/// Lexicographic enumeration of every stationary policy.
pub struct PolicyEnumerator {
    choices: Vec<Vec<ActionIndex>>,
    count: usize,
}

impl PolicyEnumerator {
    pub fn new(model: &ModelSpec, limit: usize) -> Result<Self> {
        let count = model.policy_count();
        if count > limit as f64 {
            return Err(DpError::EnumerationGuard { count, limit });
        }
        let choices = (0..model.n_states())
            .map(|x| model.feasible_actions(x).collect())
            .collect();
        Ok(Self {
            choices,
            count: count as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// The `k`-th policy; state 0 is the most significant digit.
    pub fn policy(&self, mut k: usize) -> Policy {
        let mut actions = vec![0; self.choices.len()];
        for (x, opts) in self.choices.iter().enumerate().rev() {
            actions[x] = opts[k % opts.len()];
            k /= opts.len();
        }
        Policy::new(actions)
    }
}

/// Solves every stationary policy and takes the pointwise optimum.
pub fn enumerate_policies_oracle<A: Aggregator>(model: &ModelSpec, agg: A, tol: f64) -> Result<OracleResult> {
    let opts = OracleOptions {
        tol,
        ..OracleOptions::default()
    };
    let problem = Problem::new(model, agg)?;
    enumerate_with(&problem, &opts)
}

/// Oracle over a prepared problem (custom brackets included).
pub fn enumerate_with<A: Aggregator>(problem: &Problem<'_, A>, opts: &OracleOptions) -> Result<OracleResult> {
    let model = problem.model();
    let policies = PolicyEnumerator::new(model, opts.limit)?;
    let solve = SolveOptions::default().with_tol(opts.tol).with_max_iter(opts.max_iter);
    let values: Vec<ValueFunction> = (0..policies.len())
        .into_par_iter()
        .map(|k| problem.solve_sigma(&policies.policy(k), &solve))
        .collect::<Result<_>>()?;

    let direction = problem.direction();
    let n = model.n_states();
    let mut best = values[0].values().to_vec();
    let mut best_action: Vec<ActionIndex> = policies.policy(0).actions().to_vec();
    for (k, v) in values.iter().enumerate().skip(1) {
        let sigma = policies.policy(k);
        for x in 0..n {
            if direction.improves(v[x], best[x]) {
                best[x] = v[x];
                best_action[x] = sigma[x];
            }
        }
    }
    let attains = |v: &ValueFunction| {
        v.iter()
            .zip(&best)
            .all(|(a, b)| (a - b).abs() <= ATTAIN_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
    };
    let optimal_policy = values
        .iter()
        .position(attains)
        .map(|k| policies.policy(k))
        .unwrap_or_else(|| Policy::new(best_action));

    let per_policy_values = opts
        .keep_table
        .then(|| (0..policies.len()).map(|k| policies.policy(k)).zip(values).collect());
    Ok(OracleResult {
        optimal_value: ValueFunction::new(best),
        optimal_policy,
        policies_enumerated: policies.len(),
        per_policy_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneVerdict {
    Monotone,
    /// The first iterate that moved against the expected direction.
    NotMonotone {
        iteration: usize,
        state: StateIndex,
    },
    /// The run did not start at the bracket endpoint, so nothing is claimed.
    NotApplicable,
}

impl MonotoneVerdict {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            MonotoneVerdict::Monotone => Some(true),
            MonotoneVerdict::NotMonotone { .. } => Some(false),
            MonotoneVerdict::NotApplicable => None,
        }
    }
}

/// Runs value function iteration from `start` (the endpoint `w1` for max programs,
/// `w2` for min programs when `None`) and checks that iterates move one way only.
pub fn monotone_iterate_check<A: Aggregator>(
    model: &ModelSpec,
    agg: A,
    bracket: &Bracket,
    start: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<MonotoneVerdict> {
    let direction = agg.direction();
    let endpoint = bracket.start(direction);
    if let Some(s) = start {
        if s != endpoint.values() {
            return Ok(MonotoneVerdict::NotApplicable);
        }
    }
    let problem = Problem::with_bracket(model, agg, bracket.clone())?;
    let mut v = endpoint.into_inner();
    for iteration in 1..=opts.max_iter {
        let (next, _) = problem.apply_bellman(&v)?;
        let mut residual = 0.0f64;
        for (x, (&new, &old)) in next.iter().zip(&v).enumerate() {
            let slack = 1e-12 * new.abs().max(old.abs());
            let backwards = match direction {
                Direction::Max => new < old - slack,
                Direction::Min => new > old + slack,
            };
            if backwards {
                return Ok(MonotoneVerdict::NotMonotone { iteration, state: x });
            }
            residual = residual.max((new - old).abs());
        }
        v = next.into_inner();
        if residual <= opts.tol {
            break;
        }
    }
    Ok(MonotoneVerdict::Monotone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::testing::{random_positive_model, two_state_model};
    use crate::families::*;
    use crate::solver::value_function_iteration;
    use crate::value::sup_norm_distance;

    fn additive(beta: f64) -> Additive {
        Additive::new(AdditiveParams { beta, eps_margin: None }).unwrap()
    }

    #[test]
    fn closed_form_brackets_pass() {
        let model = random_positive_model(2, 2, 1);
        let families: Vec<Family> = vec![
            additive(0.9).into(),
            EpsteinZin::new(EzParams {
                beta: 0.9,
                rho: 0.5,
                gamma: 0.8,
                delta: None,
                regime: None,
            })
            .unwrap()
            .into(),
            EpsteinZin::new(EzParams {
                beta: 0.9,
                rho: 0.5,
                gamma: 2.0,
                delta: None,
                regime: None,
            })
            .unwrap()
            .into(),
            EpsteinZin::new(EzParams {
                beta: 0.9,
                rho: 1.5,
                gamma: 3.0,
                delta: None,
                regime: None,
            })
            .unwrap()
            .into(),
            RiskSensitive::new(RiskSensitiveParams {
                beta: 0.9,
                theta: 1.0,
                delta: None,
            })
            .unwrap()
            .into(),
            NarrowFraming::new(NarrowFramingParams {
                beta: 0.9,
                rho: 0.5,
                gamma: 2.0,
            })
            .unwrap()
            .into(),
        ];
        for fam in families {
            let b = fam.bracket(&model).unwrap();
            let report = check_assumptions(&model, &fam, &b, 100, 3).unwrap();
            assert!(report.all_ok(), "{}: {report}", fam.name());
            assert!(report.worst_violation <= 0.0);
        }
    }

    #[test]
    fn divergent_discount_breaks_upper_bound() {
        let model = two_state_model();
        let b = additive(0.9).bracket(&model).unwrap();
        let bad = Additive::unchecked(AdditiveParams {
            beta: 1.05,
            eps_margin: None,
        });
        let report = check_assumptions(&model, &bad, &b, 50, 0).unwrap();
        assert!(!report.upper_bound_ok);
        assert!(report.worst_violation > 0.0);
    }

    #[test]
    fn convex_family_is_not_concave() {
        let model = random_positive_model(2, 2, 2);
        let ez = EpsteinZin::from_theta(0.9, 0.5, None).unwrap();
        let b = ez.bracket(&model).unwrap();
        let report = AssumptionCheck::new(&model, &ez, &b)
            .shape(Shape::Concave)
            .samples(50)
            .run()
            .unwrap();
        assert!(!report.shape_ok);
        assert_eq!(report.witness.unwrap().check, CheckKind::Shape);
    }

    #[test]
    fn oracle_two_state() {
        let model = two_state_model();
        let res = enumerate_policies_oracle(&model, additive(0.5), 1e-12).unwrap();
        assert_eq!(res.policies_enumerated, 4);
        assert!((res.optimal_value[0] - 3.0).abs() < 1e-9);
        assert!((res.optimal_value[1] - 4.0).abs() < 1e-9);
        assert_eq!(res.optimal_policy.actions(), &[1, 0]);
    }

    #[test]
    fn oracle_single_policy() {
        let model = crate::model::ModelBuilder::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0])
            .kernel(vec![vec![1.0]])
            .reward(vec![vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![0.0]]])
            .successor(vec![vec![0, 1], vec![1, 0]])
            .feasible(vec![vec![false, true], vec![false, true]])
            .build()
            .unwrap();
        let res = enumerate_policies_oracle(&model, additive(0.5), 1e-12).unwrap();
        assert_eq!(res.policies_enumerated, 1);
        assert!((res.optimal_value[0] - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_matches_vfi_for_min_regime() {
        let model = crate::synth::random_model(
            &crate::synth::RandomModel {
                n_a: Some(2),
                ..crate::synth::RandomModel::new(3, 1)
            },
            7,
        );
        let ez = EpsteinZin::new(EzParams {
            beta: 0.9,
            rho: 0.5,
            gamma: 2.0,
            delta: None,
            regime: None,
        })
        .unwrap();
        let res = enumerate_policies_oracle(&model, &ez, 1e-13).unwrap();
        let vfi = value_function_iteration(&model, &ez, &SolveOptions::default().with_tol(1e-13)).unwrap();
        assert!(sup_norm_distance(&res.optimal_value, &vfi.fixed_point).unwrap() <= 1e-8);
    }

    #[test]
    fn guard_rejects_large_enumeration() {
        let model = crate::synth::constant_reward_model(10, 1, 1.0);
        assert!(matches!(
            enumerate_policies_oracle(&model, additive(0.9), 1e-10),
            Err(DpError::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn enumerator_is_lexicographic() {
        let model = two_state_model();
        let e = PolicyEnumerator::new(&model, 10).unwrap();
        let all: Vec<Vec<usize>> = (0..e.len()).map(|k| e.policy(k).actions().to_vec()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn monotone_iterates() {
        let model = two_state_model();
        let agg = additive(0.5);
        let b = agg.bracket(&model).unwrap();
        let opts = SolveOptions::default();
        assert_eq!(
            monotone_iterate_check(&model, &agg, &b, None, &opts).unwrap(),
            MonotoneVerdict::Monotone
        );

        let rs = RiskSensitive::new(RiskSensitiveParams {
            beta: 0.9,
            theta: 1.0,
            delta: None,
        })
        .unwrap();
        let m = random_positive_model(3, 2, 8);
        let b = rs.bracket(&m).unwrap();
        assert_eq!(
            monotone_iterate_check(&m, &rs, &b, None, &opts).unwrap(),
            MonotoneVerdict::Monotone
        );

        let interior: Vec<f64> = b.w1().iter().zip(b.w2()).map(|(a, c)| 0.5 * (a + c)).collect();
        assert_eq!(
            monotone_iterate_check(&m, &rs, &b, Some(&interior), &opts).unwrap(),
            MonotoneVerdict::NotApplicable
        );
    }
}
