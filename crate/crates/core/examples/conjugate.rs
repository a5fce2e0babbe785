// A minimizing problem solved two ways: directly, and as the maximizing
// problem for the conjugate aggregator followed by a sign flip.

use recurdp::families::{EpsteinZin, EzParams};
use recurdp::synth::{random_model, RandomModel};
use recurdp::{conjugate_aggregator, sup_norm_distance, value_function_iteration, SolveOptions};

/// Sup-norm gap between the two solutions.
pub fn run_example() -> recurdp::Result<f64> {
    let model = random_model(&RandomModel::new(4, 3), 5);
    let agg = EpsteinZin::new(EzParams {
        beta: 0.9,
        rho: 0.5,
        gamma: 2.0,
        delta: None,
        regime: None,
    })?;
    let opts = SolveOptions::default().with_tol(1e-13);
    let direct = value_function_iteration(&model, &agg, &opts)?;
    let dual = value_function_iteration(&model, conjugate_aggregator(&agg)?, &opts)?;
    let gap = sup_norm_distance(&direct.fixed_point, &dual.fixed_point.negated())?;
    println!("direct minimization:   {:?}", direct.fixed_point.values());
    println!("negated conjugate max: {:?}", dual.fixed_point.negated().values());
    println!("gap = {gap:.3e}, same policy: {}", direct.policy == dual.policy);
    Ok(gap)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
