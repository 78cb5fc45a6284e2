//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, chain, step, substream, index)`.
//! The key is mapped onto a ChaCha12 block cipher: `(seed, chain)` form the
//! 256-bit key, `(step, substream)` select the 64-bit stream, and the draw
//! index is the word position. Two streams with the same key produce the same
//! sequence no matter which thread consumes them or in what order.

use core::f64::consts::PI;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Substream tags used by the samplers.
pub mod substream {
    /// Initial state `Y_0`.
    pub const INIT: u32 = 0;
    /// Gaussian increment driving step `k`.
    pub const NOISE: u32 = 1;
    /// Uniform used to accept or reject step `k`.
    pub const ACCEPT: u32 = 2;
    /// Auxiliary draws (projections, bootstrap, Monte Carlo loops).
    pub const AUX: u32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub chain: u64,
    pub step: u32,
    pub substream: u32,
}

impl StreamKey {
    pub fn new(seed: u64, chain: u64, step: u32, substream: u32) -> Self {
        Self { seed, chain, step, substream }
    }
}

pub struct RngStream {
    inner: ChaCha12Rng,
    key: StreamKey,
}

impl RngStream {
    pub fn new(key: StreamKey) -> Self {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&key.seed.to_le_bytes());
        seed[8..16].copy_from_slice(&key.chain.to_le_bytes());
        // Domain separation so that the all-zero key is not the zero cipher key.
        seed[16..24].copy_from_slice(&0x5eed_d1ff_u64.to_le_bytes());
        let mut inner = ChaCha12Rng::from_seed(seed);
        inner.set_stream(((key.step as u64) << 32) | key.substream as u64);
        Self { inner, key }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per
    /// normal so that draw counts never depend on values.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.uniform();
        }
    }

    /// Index in `0..n` (slightly biased for huge `n`; fine for resampling).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// Per-chain view that hands out the stream for any `(step, substream)`.
#[derive(Debug, Clone, Copy)]
pub struct ChainStreams {
    pub seed: u64,
    pub chain: u64,
}

impl ChainStreams {
    pub fn new(seed: u64, chain: u64) -> Self {
        Self { seed, chain }
    }

    pub fn stream(&self, step: usize, substream: u32) -> RngStream {
        RngStream::new(StreamKey::new(self.seed, self.chain, step as u32, substream))
    }

    /// Standard normal increment for the transition into state `step`.
    pub fn noise(&self, step: usize, out: &mut [f64]) {
        self.stream(step, substream::NOISE).fill_normal(out);
    }

    /// Acceptance uniform for the transition into state `step`.
    pub fn accept_uniform(&self, step: usize) -> f64 {
        self.stream(step, substream::ACCEPT).uniform()
    }

    pub fn initial(&self, out: &mut [f64]) {
        self.stream(0, substream::INIT).fill_normal(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn same_key_same_sequence() {
        let key = StreamKey::new(7, 3, 11, substream::NOISE);
        let a: Vec<f64> = {
            let mut s = RngStream::new(key);
            (0..64).map(|_| s.normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = RngStream::new(key);
            (0..64).map(|_| s.normal()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn keys_separate_streams() {
        let mut a = RngStream::new(StreamKey::new(1, 0, 0, 0));
        let mut b = RngStream::new(StreamKey::new(1, 0, 0, 1));
        let mut c = RngStream::new(StreamKey::new(1, 1, 0, 0));
        let mut d = RngStream::new(StreamKey::new(1, 0, 1, 0));
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
        assert_ne!(x, d.next_u64());
    }

    #[test]
    fn substream_cross_correlation_is_small() {
        let n = 100_000;
        let mut a = RngStream::new(StreamKey::new(42, 0, 5, substream::NOISE));
        let mut b = RngStream::new(StreamKey::new(42, 0, 5, substream::ACCEPT));
        let xs: Vec<f64> = (0..n).map(|_| a.normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.normal()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let r = sxy / libm::sqrt(sxx * syy);
        assert!(r.abs() < 0.01, "r = {r}");
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let mut s = RngStream::new(StreamKey::new(2024, 9, 0, substream::AUX));
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / libm::sqrt(n as f64), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn uniform_is_open_interval() {
        let mut s = RngStream::new(StreamKey::new(0, 0, 0, 0));
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
