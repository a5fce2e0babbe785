// Narrow framing: the lower bracket comes from a scalar root search.

use recurdp::families::{find_nf_lower_solution, Family};
use recurdp::io::load_model;
use recurdp::{value_function_iteration, SolveOptions};

/// Returns `(d_star, d_lower)`.
pub fn run_example() -> recurdp::Result<(f64, f64)> {
    let loaded = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/models/narrow_framing.toml"))?;
    let Family::NarrowFraming(agg) = &loaded.family else {
        unreachable!("the bundled file uses narrow framing")
    };
    let root = find_nf_lower_solution(agg, &loaded.model)?;
    println!(
        "d_lower = {:.6}, d_star = {:.6}, phi(d_star) = {:.3e}",
        root.d_lower, root.d_star, root.phi_at_root
    );
    println!("w1 = {:.6e}, w2 = {:.6e}", root.bracket.w1()[0], root.bracket.w2()[0]);
    let report = value_function_iteration(&loaded.model, agg, &SolveOptions::default())?;
    println!("v_hat* = {:?}", report.fixed_point.values());
    Ok((root.d_star, root.d_lower))
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
