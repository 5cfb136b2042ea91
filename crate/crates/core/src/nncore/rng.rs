use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nncore::{Matrix, Scalar};

/// Seeded ChaCha8 stream. The same seed (and stream) yields the same draws on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from the same seed, e.g. one per epoch.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform draw in `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.inner.gen::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// Matrix of i.i.d. uniform(−radius, radius) draws.
pub fn init_uniform<F: Scalar>(rng: &mut Rng, rows: usize, cols: usize, radius: f64) -> Matrix<F> {
    assert!(radius > 0.0, "init radius must be positive");
    let data = (0..rows * cols)
        .map(|_| F::from_f64(rng.uniform(-radius, radius)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let a: Matrix<f32> = init_uniform(&mut Rng::new(42), 7, 9, 0.08);
        let b: Matrix<f32> = init_uniform(&mut Rng::new(42), 7, 9, 0.08);
        assert_eq!(a, b);
    }

    #[test]
    fn draws_within_radius() {
        let m: Matrix<f64> = init_uniform(&mut Rng::new(1), 50, 50, 0.08);
        assert!(m.data().iter().all(|x| (-0.08..=0.08).contains(x)));
    }

    #[test]
    fn mean_is_near_zero() {
        let m: Matrix<f64> = init_uniform(&mut Rng::new(7), 1, 100_000, 0.08);
        let mean = m.data().iter().sum::<f64>() / 1e5;
        // std of the mean is 0.08/sqrt(3e5) ~ 1.5e-4
        assert!(mean.abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn streams_differ() {
        let a = Rng::with_stream(3, 0).next_u64();
        let b = Rng::with_stream(3, 1).next_u64();
        assert_ne!(a, b);
    }
}
