// Smooth ambiguity aversion over two candidate kernels, loaded from a model file.

use recurdp::io::load_model;
use recurdp::{value_function_iteration, Aggregator, SolveOptions};

pub fn run_example() -> recurdp::Result<Vec<f64>> {
    let loaded = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/models/ambiguity.toml"))?;
    let bracket = loaded.family.bracket(&loaded.model)?;
    println!("bracket w1 = {:.4e}, w2 = {:.4e}", bracket.w1()[0], bracket.w2()[0]);
    let report = value_function_iteration(&loaded.model, &loaded.family, &SolveOptions::default())?;
    let utility = loaded.family.to_original_units(report.fixed_point.values())?;
    for (x, u) in utility.iter().enumerate() {
        let (s, z) = loaded.model.split(x);
        println!(
            "s = {s} z = {z}  v_hat = {:.10}  v = {u:.10}  action {}",
            report.fixed_point[x], report.policy[x]
        );
    }
    Ok(utility)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
