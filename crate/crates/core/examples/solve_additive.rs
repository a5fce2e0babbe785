// Load the bundled two-state additive model, solve it and export the CSV tables.

use recurdp::io::{export_report, load_model};
use recurdp::{value_function_iteration, SolveOptions};

pub fn run_example() -> recurdp::Result<Vec<f64>> {
    let loaded = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/models/two_state_additive.toml"))?;
    let report = value_function_iteration(&loaded.model, &loaded.family, &SolveOptions::default())?;
    println!(
        "v* = {:?} after {} iterations",
        report.fixed_point.values(),
        report.iterations
    );
    println!("greedy policy = {:?}", report.policy.actions());

    let dir = std::env::temp_dir().join("recurdp-solve-additive");
    export_report(&report, &loaded.family, &loaded.model, &dir)?;
    println!("tables written to {}", dir.display());
    Ok(report.fixed_point.into_inner())
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
