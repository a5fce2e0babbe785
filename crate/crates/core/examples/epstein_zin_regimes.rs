// Epstein-Zin utility in each of its three parameter regimes, on one random model.

use recurdp::families::{EpsteinZin, EzParams};
use recurdp::synth::{random_model, RandomModel};
use recurdp::{value_function_iteration, Aggregator, SolveOptions};

/// Returns `(regime label, mean lifetime utility)` per regime.
pub fn run_example() -> recurdp::Result<Vec<(&'static str, f64)>> {
    let model = random_model(&RandomModel::new(4, 2), 11);
    let mut out = Vec::new();
    for (rho, gamma) in [(0.5, 0.8), (0.5, 2.0), (1.5, 3.0)] {
        let agg = EpsteinZin::new(EzParams {
            beta: 0.9,
            rho,
            gamma,
            delta: None,
            regime: None,
        })?;
        let report = value_function_iteration(&model, &agg, &SolveOptions::default())?;
        let utility = agg.to_original_units(report.fixed_point.values())?;
        let mean = utility.iter().sum::<f64>() / utility.len() as f64;
        println!(
            "{:<28} theta = {:>7.3}  {:?}  iterations = {:>4}  mean utility = {mean:.6}",
            agg.regime().label(),
            agg.theta(),
            agg.direction(),
            report.iterations
        );
        out.push((agg.regime().label(), mean));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
