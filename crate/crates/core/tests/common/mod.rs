//! Seeded random instances shared by the integration suites.
#![allow(dead_code)]

use mimo_ipc::hermitian::HermitianMatrix;
use mimo_ipc::problem::{IpcConstraint, ProblemInstance};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `H⁺H` for a complex Gaussian `rank × m` channel.
pub fn random_gram(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> HermitianMatrix {
    let h = DMatrix::from_fn(rank, m, |_, _| {
        Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
    });
    HermitianMatrix::gram(&h).unwrap()
}

/// Gram with rank drawn from `1..=m`.
pub fn random_rank_gram(rng: &mut ChaCha8Rng, m: usize) -> HermitianMatrix {
    let rank = rng.gen_range(1..=m);
    random_gram(rng, m, rank)
}

pub fn budget(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0.1..10.0)
}

/// `m ∈ {2, 3, 4}`, `K ∈ {1, 2}`, random-rank Grams, budgets in `[0.1, 10]`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> ProblemInstance {
    let m = rng.gen_range(2..=4);
    let k = rng.gen_range(1..=2);
    random_instance_with(rng, m, k)
}

pub fn random_instance_with(rng: &mut ChaCha8Rng, m: usize, k: usize) -> ProblemInstance {
    let w1 = random_rank_gram(rng, m);
    let constraints = (0..k)
        .map(|_| IpcConstraint {
            w2: random_rank_gram(rng, m),
            p_i: budget(rng),
        })
        .collect();
    ProblemInstance::new(w1, constraints, budget(rng)).unwrap()
}

/// The 200-instance suite used by the oracle comparison.
pub fn oracle_suite() -> Vec<ProblemInstance> {
    let mut r = rng(20_240_601);
    (0..200).map(|_| random_instance(&mut r)).collect()
}

pub fn real(rows: &[&[f64]]) -> HermitianMatrix {
    HermitianMatrix::from_real_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

pub fn diag(d: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_diagonal(d).unwrap()
}

pub fn example1(p_t: f64) -> ProblemInstance {
    ProblemInstance::single(diag(&[1.0, 0.5]), real(&[&[1.0, -0.5], &[-0.5, 1.0]]), p_t, 1.0).unwrap()
}

pub fn example2(p_t: f64, p_i: f64) -> ProblemInstance {
    ProblemInstance::single(diag(&[1.0, 0.5]), real(&[&[1.0, -1.0], &[-1.0, 1.0]]), p_t, p_i).unwrap()
}

pub fn example3(w1: f64, w2: f64, p_t: f64, p_i: f64) -> ProblemInstance {
    ProblemInstance::single(diag(&[w1, 0.0]), diag(&[w2, 0.0]), p_t, p_i).unwrap()
}
