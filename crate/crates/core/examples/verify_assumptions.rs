// Sampled assumption checks on every bundled model, plus one deliberately
// broken aggregator (discount factor above one).

use recurdp::families::{Additive, AdditiveParams};
use recurdp::io::load_model;
use recurdp::verify::check_assumptions;
use recurdp::Aggregator;

/// `(name, passed)` for every check run.
pub fn run_example() -> recurdp::Result<Vec<(String, bool)>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let mut out = Vec::new();
    for name in [
        "two_state_additive",
        "ez_convex",
        "ez_concave",
        "ez_theta_above_one",
        "risk_sensitive",
        "ambiguity",
        "narrow_framing",
    ] {
        let loaded = load_model(format!("{dir}/{name}.toml"))?;
        let bracket = loaded.family.bracket(&loaded.model)?;
        let report = check_assumptions(&loaded.model, &loaded.family, &bracket, 200, 1)?;
        println!("{name:<20} {}", if report.all_ok() { "ok" } else { "FAIL" });
        out.push((name.to_string(), report.all_ok()));
    }

    let loaded = load_model(format!("{dir}/two_state_additive.toml"))?;
    let honest = Additive::new(AdditiveParams {
        beta: 0.5,
        eps_margin: None,
    })?;
    let bracket = honest.bracket(&loaded.model)?;
    let broken = Additive::unchecked(AdditiveParams {
        beta: 1.05,
        eps_margin: None,
    });
    let report = check_assumptions(&loaded.model, &broken, &bracket, 200, 1)?;
    println!("beta = 1.05 with the beta = 0.5 bracket:\n{report}");
    out.push(("additive beta 1.05".to_string(), report.all_ok()));
    Ok(out)
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    run_example().map(|_| ())
}
