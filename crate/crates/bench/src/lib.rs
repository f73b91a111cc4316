//! Benchmark fixtures.

use hopfix::experiments::Spacing;
use hopfix::{DistortedBasis, PatternSet};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` unit patterns in `R^n` from a distorted basis with condition number 2.
pub fn patterns(n: usize, seed: u64) -> PatternSet {
    DistortedBasis::generate(n, 2.0, Spacing::Linear, seed).expect("valid basis").patterns
}

/// Uniform point of `[-1, 1]^d`.
pub fn point(d: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0))
}
