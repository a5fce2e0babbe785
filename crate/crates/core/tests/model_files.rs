// Every bundled model file survives load, save and load unchanged.

use recurdp::io::{load_model, model_to_string, parse_model};

#[test]
fn load_save_load_is_idempotent() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let first = load_model(&path).unwrap();
        let text = model_to_string(&first.file).unwrap();
        let second = parse_model(&text).unwrap();
        assert_eq!(first.model, second.model, "{}", path.display());
        assert_eq!(first.family, second.family, "{}", path.display());
        assert_eq!(first.weight, second.weight, "{}", path.display());
        assert_eq!(first.solver, second.solver, "{}", path.display());
        assert_eq!(model_to_string(&second.file).unwrap(), text);
        count += 1;
    }
    assert_eq!(count, 8);
}

#[test]
fn every_rejection_names_its_reason() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let cases = [
        ("bad_kernel", "kernel row 0"),
        ("beta_above_one", "discount factor"),
        ("ez_rho_one", "rho = 1"),
        ("mislabeled_regime", "declared regime"),
    ];
    for (name, needle) in cases {
        let err = load_model(format!("{dir}/{name}.toml")).unwrap_err();
        assert!(err.to_string().contains(needle), "{name}: {err}");
    }
}
