#![allow(dead_code)]

pub mod gradcheck;
pub mod hygiene;

use acvae_core::diffcore::{Matrix, Rng};

/// Random one-hot covariate rows with the `[gender, age bin, ICV bin]` layout.
pub fn random_covariates(rng: &mut Rng, rows: usize) -> Matrix {
    let mut c = Matrix::zeros(rows, 22);
    for r in 0..rows {
        c.set(r, rng.below(2), 1.0);
        c.set(r, 2 + rng.below(10), 1.0);
        c.set(r, 12 + rng.below(10), 1.0);
    }
    c
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.standard_normal()).collect()).unwrap()
}

/// `P(pos > neg) + ½ P(tie)` by counting every pair.
pub fn brute_force_auc(negative: &[f64], positive: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &p in positive {
        for &n in negative {
            twice += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * negative.len() * positive.len()) as f64
}

/// Scores drawn from a small grid so ties are common.
pub fn tied_scores(rng: &mut Rng, n: usize, levels: usize) -> Vec<f64> {
    (0..n).map(|_| rng.below(levels) as f64 * 0.25).collect()
}
