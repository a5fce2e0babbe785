// Risk-sensitive preferences: with a constant reward c the lifetime value is
// c / (1 - beta) whatever the risk sensitivity.

use recurdp::families::{RiskSensitive, RiskSensitiveParams};
use recurdp::synth::constant_reward_model;
use recurdp::{value_function_iteration, Aggregator, SolveOptions};

/// Original-units value at state 0 for each risk sensitivity.
pub fn run_example() -> recurdp::Result<Vec<f64>> {
    let (c, beta) = (0.4, 0.9);
    let model = constant_reward_model(3, 2, c);
    let mut out = Vec::new();
    for theta in [0.5, 1.0, 5.0] {
        let agg = RiskSensitive::new(RiskSensitiveParams {
            beta,
            theta,
            delta: None,
        })?;
        let report = value_function_iteration(&model, &agg, &SolveOptions::default().with_tol(1e-13).relative())?;
        let v = agg.to_original_units(report.fixed_point.values())?;
        println!(
            "theta = {theta:<4} v_hat = {:.10e}  v = {:.12}",
            report.fixed_point[0], v[0]
        );
        out.push(v[0]);
    }
    println!("closed form c / (1 - beta) = {:.12}", c / (1.0 - beta));
    Ok(out)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
