//! Seedable, portable random source.
//!
//! The stream is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`) seeded via
//! `seed_from_u64`. Every sampling primitive below is defined directly on
//! the raw `u64` stream so the results do not depend on the sampling
//! algorithms of any particular `rand` release:
//!
//! * `uniform_f64`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: rejection sampling on `next_u64` with zone
//!   `u64::MAX - (u64::MAX % n)`, then `x % n`.
//! * `normal`: Box-Muller on two `uniform_f64` draws, cosine branch only.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Uniform integer in the closed interval `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + self.below(span) as i64
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform_f64();
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `count` distinct values from `[lo, hi)`, drawn without replacement by
    /// a partial Fisher-Yates shuffle, returned in draw order.
    pub fn sample_distinct(&mut self, lo: usize, hi: usize, count: usize) -> Vec<usize> {
        assert!(hi >= lo && count <= hi - lo);
        let mut pool: Vec<usize> = (lo..hi).collect();
        for i in 0..count {
            let j = i + self.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

/// SplitMix64 finalizer, used to derive independent per-item seeds from one
/// master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
