// Build a model in code, write it as a model file and read it back.
// With a path argument the file is written there instead of a temp directory.

use recurdp::families::EzRegime;
use recurdp::io::{load_model, save_model, FamilyBlock, ModelFile, SolverBlock};
use recurdp::unbounded::GrowingGrid;

/// Whether the reloaded model equals the original.
pub fn run_example_to(path: &std::path::Path) -> recurdp::Result<bool> {
    let grid = GrowingGrid {
        n_s: 10,
        n_z: 2,
        ratio: 1.05,
        choice_stride: 2,
    };
    let model = grid.model();
    let family = FamilyBlock::EpsteinZin {
        beta: 0.9,
        rho: 2.0,
        gamma: 2.5,
        delta: None,
        regime: Some(EzRegime::ConcaveMinThetaAboveOne),
    };
    let weight = grid.weight(1.5);
    let file = ModelFile::from_parts(&model, family, Some(&weight), SolverBlock::default());
    save_model(path, &file)?;
    let loaded = load_model(path)?;
    println!("wrote {} ({} states)", path.display(), loaded.model.n_states());
    Ok(loaded.model == model && loaded.weight.as_ref() == Some(&weight))
}

pub fn run_example() -> recurdp::Result<bool> {
    run_example_to(&std::env::temp_dir().join("recurdp-weighted-growing-grid.toml"))
}

#[allow(dead_code)]
fn main() -> recurdp::Result<()> {
    let same = match std::env::args().nth(1) {
        Some(path) => run_example_to(std::path::Path::new(&path))?,
        None => run_example()?,
    };
    println!("round trip exact: {same}");
    Ok(())
}
