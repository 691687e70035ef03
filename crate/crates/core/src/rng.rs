//! Seeded random stream shared by initialization, shuffling, fold dealing and
//! synthetic data generation.
//!
//! Every consumer draws from a SplitMix64 generator whose state is the raw
//! 64-bit seed. Derived draws are defined exactly so another implementation
//! can reproduce the same parameters, splits and datasets:
//!
//! - `next_f64`: `(x >> 11) * 2^-53`, uniform on `[0, 1)`.
//! - `below(n)`: rejection sampling, redraw while `x >= n * floor(2^64 / n)`,
//!   then `x % n`.
//! - `shuffle`: Fisher-Yates from the back, `j = below(i + 1)` for
//!   `i = len-1 .. 1`.
//! - `standard_normal`: Box-Muller with `u1 = 1 - next_f64()` (in `(0, 1]`),
//!   `u2 = next_f64()`, returning `sqrt(-2 ln u1) * cos(2 pi u2)`. The sine
//!   branch is discarded so that each normal costs exactly two draws.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct Prng {
    inner: SplitMix64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // 2^64 mod n; draws above u64::MAX - rem would bias the low residues.
        let rem = (u64::MAX % n + 1) % n;
        let limit = u64::MAX - rem;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
