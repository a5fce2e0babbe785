// Rewards that grow with the state: growth conditions, the weighted bracket
// and value function iteration in the kappa^theta-weighted norm.

use recurdp::families::EzParams;
use recurdp::unbounded::{
    check_weight_assumptions, solve_unbounded_ez, weighted_aggregator, weighted_norm, GrowingGrid, WeightedBracket,
};

/// Weighted norm of the fixed point.
pub fn run_example() -> recurdp::Result<f64> {
    let grid = GrowingGrid {
        n_s: 10,
        n_z: 2,
        ratio: 1.05,
        choice_stride: 1,
    };
    let model = grid.model();
    let params = EzParams {
        beta: 0.9,
        rho: 2.0,
        gamma: 2.5,
        delta: None,
        regime: None,
    };
    let agg = weighted_aggregator(params)?;
    let spec = grid.weight(agg.theta());

    let report = check_weight_assumptions(&model, &spec, agg.theta())?;
    println!("{report}");
    let wb = WeightedBracket::new(&spec, params.beta, agg.theta())?;
    let (strict_lower, upper) = wb.check_conditions(&model, &agg)?;
    println!("bracket conditions: strict lower {strict_lower:.3e}, upper {upper:.3e} (both <= 0 when they hold)");

    let solved = solve_unbounded_ez(&model, params, &spec, 1e-10, 100_000)?;
    let norm = weighted_norm(&solved.fixed_point, &spec, agg.theta());
    println!(
        "{} iterations, weighted norm of v* = {norm:.6}, contraction estimate {:?}",
        solved.iterations, solved.contraction_estimate
    );
    Ok(norm)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
