//! Counter-based Gaussian noise streams.
//!
//! Every draw is addressed by `(seed, stream_id, step, channel)`: those four
//! words form the 256-bit key of a ChaCha8 generator, and the standard
//! normals for that address are read from the start of its keystream
//! (ziggurat sampling via `rand_distr::StandardNormal`). Draws therefore do
//! not depend on how many values were consumed before, which keeps
//! trajectories reproducible under any parallel schedule and lets two
//! controllers share identical noise up to the step where they diverge.
//!
//! The generator is fixed for this release; changing it changes every
//! simulated number.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::control::{Matrix, Vector};

/// Channel of the process noise w_k.
pub const PROCESS_CHANNEL: u64 = 0;
/// Channel of the exploration noise ζ_k.
pub const EXPLORATION_CHANNEL: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    fn generator(&self, step: u64, channel: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&step.to_le_bytes());
        key[24..].copy_from_slice(&channel.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// `dim` independent standard normals at the given address.
    pub fn standard_normals(&self, step: u64, channel: u64, dim: usize) -> Vector {
        let mut g = self.generator(step, channel);
        Vector::from_fn(dim, |_, _| g.sample::<f64, _>(StandardNormal))
    }
}

/// w = F z with z ~ N(0, I): a draw from N(0, F Fᵀ) for step `step`.
pub fn sample_noise(factor: &Matrix, rng: &RngStream, step: u64) -> Vector {
    factor * rng.standard_normals(step, PROCESS_CHANNEL, factor.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factor_gives_zero() {
        let rng = RngStream::new(3, 4);
        for step in 0..10 {
            assert_eq!(sample_noise(&Matrix::zeros(3, 3), &rng, step), Vector::zeros(3));
        }
    }

    #[test]
    fn addresses_are_deterministic_and_distinct() {
        let a = RngStream::new(7, 1);
        assert_eq!(a.standard_normals(5, 0, 4), a.standard_normals(5, 0, 4));
        assert_ne!(a.standard_normals(5, 0, 4), a.standard_normals(6, 0, 4));
        assert_ne!(a.standard_normals(5, 0, 4), a.standard_normals(5, 1, 4));
        assert_ne!(a.standard_normals(5, 0, 4), RngStream::new(7, 2).standard_normals(5, 0, 4));
        assert_ne!(a.standard_normals(5, 0, 4), RngStream::new(8, 1).standard_normals(5, 0, 4));
        // prefix property: shorter draws are a prefix of longer ones
        let long = a.standard_normals(9, 0, 5);
        assert_eq!(a.standard_normals(9, 0, 2).as_slice(), &long.as_slice()[..2]);
    }

    #[test]
    fn identity_covariance() {
        let rng = RngStream::new(2024, 0);
        let n = 1_000_000u64;
        let mut cov = Matrix::zeros(2, 2);
        for step in 0..n {
            let w = sample_noise(&Matrix::identity(2, 2), &rng, step);
            cov += &w * w.transpose();
        }
        cov /= n as f64;
        let err = crate::control::norm2(&(cov - Matrix::identity(2, 2)));
        assert!(err < 0.01, "covariance error {err}");
    }
}
