#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recurdp::families::{
    Additive, AdditiveParams, Ambiguity, AmbiguityParams, EpsteinZin, EzParams, Family, NarrowFraming,
    NarrowFramingParams, RiskSensitive, RiskSensitiveParams,
};
use recurdp::synth::{random_kernel, random_model, RandomModel};
use recurdp::ModelSpec;

pub const BETA: f64 = 0.9;

/// At most five states and three actions, positive rewards, random kernel and successors.
pub fn random_instance(seed: u64) -> ModelSpec {
    let shapes = [(2, 2), (5, 1), (1, 5), (2, 2), (1, 4)];
    let (n_s, n_z) = shapes[(seed % shapes.len() as u64) as usize];
    random_model(
        &RandomModel {
            n_a: Some(3),
            feasible_prob: 0.7,
            ..RandomModel::new(n_s, n_z)
        },
        seed,
    )
}

pub fn ez(rho: f64, gamma: f64) -> EpsteinZin {
    EpsteinZin::new(EzParams {
        beta: BETA,
        rho,
        gamma,
        delta: None,
        regime: None,
    })
    .unwrap()
}

pub fn ambiguity(model: &ModelSpec, rho: f64, seed: u64) -> Ambiguity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let n_z = model.n_z();
    let mu = (0..n_z)
        .map(|_| {
            let w: f64 = rng.gen_range(0.1..0.9);
            vec![w, 1.0 - w]
        })
        .collect();
    Ambiguity::new(AmbiguityParams {
        beta: BETA,
        rho,
        gamma: 2.0,
        eta: 5.0,
        kernels: vec![model.kernel_table(), random_kernel(n_z, &mut rng)],
        mu,
        delta: None,
    })
    .unwrap()
}

/// `model` with a seeded gamble utility table in `[0, 0.1]`.
pub fn with_gambles(model: &ModelSpec, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let table = (0..model.n_s())
        .map(|_| {
            (0..model.n_a())
                .map(|_| (0..model.n_z()).map(|_| rng.gen_range(0.0..0.1)).collect())
                .collect()
        })
        .collect();
    model.with_gamble_utility(table).unwrap()
}

pub fn narrow_framing(rho: f64, gamma: f64) -> NarrowFraming {
    NarrowFraming::new(NarrowFramingParams { beta: BETA, rho, gamma }).unwrap()
}

/// Every family on `model`, with the model each one runs on.
pub fn all_families(model: &ModelSpec, seed: u64) -> Vec<(&'static str, Family, ModelSpec)> {
    let gambled = with_gambles(model, seed);
    vec![
        (
            "additive",
            Additive::new(AdditiveParams {
                beta: BETA,
                eps_margin: None,
            })
            .unwrap()
            .into(),
            model.clone(),
        ),
        ("ez-convex-max", ez(0.5, 0.8).into(), model.clone()),
        ("ez-concave-min", ez(0.5, 2.0).into(), model.clone()),
        ("ez-theta-above-one", ez(1.5, 3.0).into(), model.clone()),
        (
            "risk-sensitive",
            RiskSensitive::new(RiskSensitiveParams {
                beta: BETA,
                theta: 1.0,
                delta: None,
            })
            .unwrap()
            .into(),
            model.clone(),
        ),
        ("ambiguity", ambiguity(model, 0.5, seed).into(), model.clone()),
        ("ambiguity-limiting", ambiguity(model, 1.0, seed).into(), model.clone()),
        ("narrow-framing", narrow_framing(0.5, 2.0).into(), gambled.clone()),
        (
            "narrow-framing-theta-above-one",
            narrow_framing(1.5, 3.0).into(),
            gambled,
        ),
    ]
}

pub fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
