//! Seeded random streams.

use rand::distributions::{Distribution, Open01};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic generator: the same `(seed, stream)` always yields the same
/// sequence, independent of platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// An independent stream derived from `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.inner)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.open01()
    }

    pub fn gumbel(&mut self, location: f64, scale: f64) -> Result<f64> {
        gumbel_sample(self, location, scale)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Inverse-CDF Gumbel transform of a uniform draw `u` in (0, 1).
pub fn gumbel_from_uniform(u: f64, location: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("gumbel scale must be positive, got {scale}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("uniform draw {u} outside (0, 1)")));
    }
    Ok(location - scale * (-u.ln()).ln())
}

pub fn gumbel_sample(rng: &mut Rng, location: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("gumbel scale must be positive, got {scale}")));
    }
    gumbel_from_uniform(rng.open01(), location, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_at_inverse_e_returns_location() {
        let u = (-1.0f64).exp();
        let g = gumbel_from_uniform(u, 3.25, 2.0).unwrap();
        assert!((g - 3.25).abs() < 1e-15);
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut rng = Rng::new(2024);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.gumbel(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - EULER_GAMMA).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn non_positive_scale_rejected() {
        let mut rng = Rng::new(1);
        assert!(rng.gumbel(0.0, 0.0).is_err());
        assert!(rng.gumbel(0.0, -1.0).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| Rng::stream(9, 1).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = Rng::stream(9, 0);
        let mut s1 = Rng::stream(9, 1);
        assert_ne!(s0.next_u64(), s1.next_u64());
    }
}
