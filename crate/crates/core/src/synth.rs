//! Seeded synthetic models for tests, examples and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ModelBuilder, ModelSpec};

/// Shape and reward range of a random model.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModel {
    pub n_s: usize,
    pub n_z: usize,
    /// `None`: one action per endogenous state with `successor(s, a) = a`.
    /// `Some(n)`: `n` actions with a random successor table.
    pub n_a: Option<usize>,
    pub reward_range: (f64, f64),
    /// Probability that a pair is feasible; one action per state is always kept.
    pub feasible_prob: f64,
}

impl RandomModel {
    pub fn new(n_s: usize, n_z: usize) -> Self {
        Self {
            n_s,
            n_z,
            n_a: None,
            reward_range: (0.2, 1.5),
            feasible_prob: 1.0,
        }
    }
}

/// A random row-stochastic matrix. The last entry of each row absorbs rounding.
pub fn random_kernel<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let head: f64 = row[..n - 1].iter().sum();
            row[n - 1] = (1.0 - head).max(0.0);
            row
        })
        .collect()
}

pub fn random_model(spec: &RandomModel, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_s = spec.n_s;
    let n_z = spec.n_z;
    let n_a = spec.n_a.unwrap_or(n_s);
    let (lo, hi) = spec.reward_range;
    let kernel = random_kernel(n_z, &mut rng);
    let reward: Vec<Vec<Vec<f64>>> = (0..n_s)
        .map(|_| {
            (0..n_a)
                .map(|_| (0..n_z).map(|_| rng.gen_range(lo..=hi)).collect())
                .collect()
        })
        .collect();
    let feasible: Vec<Vec<bool>> = (0..n_s)
        .map(|_| {
            let keep = rng.gen_range(0..n_a);
            (0..n_a)
                .map(|a| a == keep || rng.gen_bool(spec.feasible_prob.clamp(0.0, 1.0)))
                .collect()
        })
        .collect();
    let mut builder = ModelBuilder::new(grid(n_s), grid(n_z), grid(n_a))
        .kernel(kernel)
        .reward(reward)
        .feasible(feasible);
    if spec.n_a.is_some() {
        let successor = (0..n_s)
            .map(|_| (0..n_a).map(|_| rng.gen_range(0..n_s)).collect())
            .collect();
        builder = builder.successor(successor);
    }
    builder.build().expect("random model satisfies every invariant")
}

/// `n_s` endogenous states, `n_z` exogenous states with a uniform kernel,
/// action = successor, reward `c` everywhere.
pub fn constant_reward_model(n_s: usize, n_z: usize, c: f64) -> ModelSpec {
    ModelBuilder::new(grid(n_s), grid(n_z), grid(n_s))
        .kernel(uniform_kernel(n_z))
        .reward(vec![vec![vec![c; n_z]; n_s]; n_s])
        .build()
        .expect("constant model satisfies every invariant")
}

/// Savings-style model: from `s` the reachable successors are `s - half_width ..= s + half_width`.
/// Rewards are positive and deterministic in `seed`.
pub fn banded_model(n_s: usize, n_z: usize, half_width: usize, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = random_kernel(n_z, &mut rng);
    let feasible: Vec<Vec<bool>> = (0..n_s)
        .map(|s| (0..n_s).map(|a| a.abs_diff(s) <= half_width).collect())
        .collect();
    let reward: Vec<Vec<Vec<f64>>> = (0..n_s)
        .map(|s| {
            (0..n_s)
                .map(|a| {
                    (0..n_z)
                        .map(|z| {
                            let wealth = 1.0 + (s as f64 + z as f64) / (n_s + n_z) as f64;
                            let saving = a as f64 / n_s as f64;
                            (wealth - 0.5 * saving).max(0.1) + 0.01 * rng.gen::<f64>()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ModelBuilder::new(grid(n_s), grid(n_z), grid(n_s))
        .kernel(kernel)
        .reward(reward)
        .feasible(feasible)
        .build()
        .expect("banded model satisfies every invariant")
}

pub fn uniform_kernel(n: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / n as f64; n]; n]
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}
