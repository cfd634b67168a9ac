//! Seeded random streams and the random objects used by the test suites.

use num_complex::Complex64 as Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::linalg::{CMat, RMat, RVec};

/// Identifier written into reports so other implementations can reproduce
/// the streams: ChaCha20 keyed by `seed_from_u64(seed)`, one stream per
/// instance index.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+stream(instance)";

pub fn stream(seed: u64, instance: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(instance);
    rng
}

/// Entries uniform on `(-scale, scale)`.
pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> RMat {
    RMat::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Entries uniform on `[lo, hi)`.
pub fn positive_matrix(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> RMat {
    RMat::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Random dynamical matrix with entries `U(-1, 1) / sqrt(n)`.
pub fn dynamical(rng: &mut impl Rng, n: usize) -> RMat {
    uniform_matrix(rng, n, n, 1.0 / (n as f64).sqrt())
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> CMat {
    let m = CMat::from_fn(n, n, |_, _| {
        Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (&m + m.adjoint()) * Complex::new(0.5, 0.0)
}

/// Strictly positive probability vector.
pub fn distribution(rng: &mut impl Rng, n: usize) -> RVec {
    let v = RVec::from_fn(n, |_, _| rng.random_range(0.05..1.0));
    let s = v.sum();
    v / s
}
