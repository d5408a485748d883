use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;

/// Seeded generator used throughout the crate: ChaCha with 8 rounds,
/// seeded through `SeedableRng::seed_from_u64`.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal matrix, deterministic in `seed`.
///
/// Samples come from `rand_distr::StandardNormal` (ziggurat) driven by
/// [`rng`], filled in row-major order.
pub fn randn(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut g = rng(seed);
    let data = fill_normal(&mut g, rows * cols);
    Matrix::from_vec(rows, cols, data).expect("shape matches length")
}

pub fn fill_normal(g: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(g)).collect()
}
