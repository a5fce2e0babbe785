// Brute-force enumeration of every stationary policy as a check on value
// function iteration.

use recurdp::families::{RiskSensitive, RiskSensitiveParams};
use recurdp::synth::{random_model, RandomModel};
use recurdp::verify::enumerate_policies_oracle;
use recurdp::{sup_norm_distance, value_function_iteration, SolveOptions};

/// Returns `(policies enumerated, sup-norm gap)`.
pub fn run_example() -> recurdp::Result<(usize, f64)> {
    let spec = RandomModel {
        n_a: Some(3),
        feasible_prob: 0.7,
        ..RandomModel::new(3, 2)
    };
    let model = random_model(&spec, 21);
    let agg = RiskSensitive::new(RiskSensitiveParams {
        beta: 0.9,
        theta: 2.0,
        delta: None,
    })?;
    let oracle = enumerate_policies_oracle(&model, &agg, 1e-12)?;
    let vfi = value_function_iteration(&model, &agg, &SolveOptions::default().with_tol(1e-12))?;
    let gap = sup_norm_distance(&oracle.optimal_value, &vfi.fixed_point)?;
    println!("{} policies enumerated", oracle.policies_enumerated);
    println!("oracle optimal policy {:?}", oracle.optimal_policy.actions());
    println!("greedy policy         {:?}", vfi.policy.actions());
    println!("gap {gap:.3e}");
    Ok((oracle.policies_enumerated, gap))
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
