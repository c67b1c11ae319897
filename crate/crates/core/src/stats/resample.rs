//! Seeded, platform-independent resampling.
//!
//! Index `j` of bootstrap iteration `b` is a pure function of `(seed, b, j)`:
//!
//! ```text
//! GAMMA  = 0x9E37_79B9_7F4A_7C15
//! mix(z) = z ^= z >> 30; z *= 0xBF58_476D_1CE4_E5B9;
//!          z ^= z >> 27; z *= 0x94D0_49BB_1331_11EB;
//!          z ^ (z >> 31)                               (wrapping u64 arithmetic)
//! key_b  = mix(mix(seed) + GAMMA·(b + 1))
//! u_bj   = mix(key_b + GAMMA·(j + 1))
//! index  = (u_bj · n) >> 64                            (128-bit product)
//! ```
//!
//! The final step maps `u` onto `[0, n)` by a widening multiply; the bias is
//! below `n / 2⁶⁴` and no draws are rejected, so every iteration consumes
//! exactly `n` counter values.

use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};

pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_key(seed: u64, iteration: u64) -> u64 {
    mix(mix(seed).wrapping_add(GAMMA.wrapping_mul(iteration.wrapping_add(1))))
}

fn draw(key: u64, counter: u64) -> u64 {
    mix(key.wrapping_add(GAMMA.wrapping_mul(counter.wrapping_add(1))))
}

fn bounded(u: u64, n: usize) -> usize {
    ((u as u128 * n as u128) >> 64) as usize
}

pub const DEFAULT_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResamplePlan {
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl ResamplePlan {
    pub fn new(n: usize, iterations: usize, seed: u64) -> CoreResult<Self> {
        if n == 0 {
            return Err(CoreError::EmptyInput);
        }
        if iterations == 0 {
            return Err(CoreError::InvalidParameter {
                name: "iterations".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(ResamplePlan { n, iterations, seed })
    }

    /// The `n` indices of iteration `b`, drawn uniformly with replacement.
    pub fn indices(&self, b: usize) -> CoreResult<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n);
        self.indices_into(b, &mut out)?;
        Ok(out)
    }

    /// Like [`ResamplePlan::indices`], reusing `out`.
    pub fn indices_into(&self, b: usize, out: &mut Vec<usize>) -> CoreResult<()> {
        if b >= self.iterations {
            return Err(CoreError::IterationOutOfRange { iteration: b, iterations: self.iterations });
        }
        let key = stream_key(self.seed, b as u64);
        out.clear();
        out.extend((0..self.n as u64).map(|j| bounded(draw(key, j), self.n)));
        Ok(())
    }
}
