//! Deterministic weight initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::matrix::DenseMatrix;

/// Uniform Glorot initialization in ±√(6/(rows+cols)), deterministic per seed.
pub fn init_glorot(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.random();
            limit * (2.0 * u - 1.0)
        })
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        assert_eq!(init_glorot(5, 7, 42), init_glorot(5, 7, 42));
    }

    #[test]
    fn different_seed_different_matrix() {
        assert_ne!(init_glorot(5, 7, 42), init_glorot(5, 7, 43));
    }

    #[test]
    fn values_within_limit() {
        let m = init_glorot(20, 64, 9);
        let limit = (6.0 / 84.0f64).sqrt();
        assert!(m.data().iter().all(|v| v.abs() <= limit));
    }
}
