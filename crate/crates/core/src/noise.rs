//! Seeded, reproducible noise streams.
//!
//! Every stream is a ChaCha8 generator keyed by
//! `SHA-256("riskscope/noise/v1" ‖ seed ‖ query id ‖ label)`, so the SVT draws
//! and the release draw of each candidate ε come from independent streams
//! that any implementation can regenerate from the decision record.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Which substream of a query's noise to open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamLabel {
    /// Threshold and comparison noise of the sparse vector test.
    Svt,
    /// Release noise for the candidate at this grid index.
    Release(usize),
}

/// Derives noise streams for one query from a session seed.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    seed: u64,
    query_id: String,
}

impl NoiseSource {
    pub fn new(seed: u64, query_id: impl Into<String>) -> Self {
        Self {
            seed,
            query_id: query_id.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn stream(&self, label: StreamLabel) -> NoiseStream {
        let mut h = Sha256::new();
        h.update(b"riskscope/noise/v1");
        h.update(self.seed.to_le_bytes());
        h.update((self.query_id.len() as u64).to_le_bytes());
        h.update(self.query_id.as_bytes());
        match label {
            StreamLabel::Svt => h.update([0u8]),
            StreamLabel::Release(i) => {
                h.update([1u8]);
                h.update((i as u64).to_le_bytes());
            }
        }
        let key: [u8; 32] = h.finalize().into();
        NoiseStream::from_key(key)
    }
}

/// A single noise stream. Streams move between threads but are never shared.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    draws: u64,
}

impl NoiseStream {
    pub fn from_key(key: [u8; 32]) -> Self {
        Self {
            rng: ChaCha8Rng::from_seed(key),
            draws: 0,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    /// Number of noise samples taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Laplace(0, b) by inverse CDF on `u ∈ (−½, ½)`.
    pub fn laplace(&mut self, b: f64) -> f64 {
        self.draws += 1;
        let u = loop {
            let u = self.uniform() - 0.5;
            if u != -0.5 {
                break u;
            }
        };
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Normal(0, σ²) by the cosine branch of Box-Muller.
    pub fn gaussian(&mut self, variance: f64) -> f64 {
        self.draws += 1;
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        variance.sqrt() * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn laplace_moments() {
        let mut s = NoiseStream::from_seed(11);
        let b = 2.0;
        let mut xs: Vec<f64> = (0..100_000).map(|_| s.laplace(b)).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 2.0 * b * b).abs() < 0.05 * 2.0 * b * b, "var {var}");
        xs.sort_by(f64::total_cmp);
        assert!(xs[50_000].abs() < 0.03);
        assert_eq!(s.draws(), 100_000);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = NoiseStream::from_seed(12);
        let xs: Vec<f64> = (0..100_000).map(|_| s.gaussian(4.0)).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() < 0.03);
        assert!((var - 4.0).abs() < 0.2);
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let src = NoiseSource::new(42, "q-1");
        let a: Vec<f64> = {
            let mut s = src.stream(StreamLabel::Release(3));
            (0..4).map(|_| s.laplace(1.0)).collect()
        };
        let b: Vec<f64> = {
            let mut s = NoiseSource::new(42, "q-1").stream(StreamLabel::Release(3));
            (0..4).map(|_| s.laplace(1.0)).collect()
        };
        assert_eq!(a, b);
        let mut other = src.stream(StreamLabel::Release(4));
        assert_ne!(a[0], other.laplace(1.0));
        let mut svt = src.stream(StreamLabel::Svt);
        assert_ne!(a[0], svt.laplace(1.0));
        let mut q2 = NoiseSource::new(42, "q-2").stream(StreamLabel::Release(3));
        assert_ne!(a[0], q2.laplace(1.0));
    }
}
