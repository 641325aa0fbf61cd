//! Seeded random streams with hierarchical forking.
//!
//! Streams are ChaCha8 seeded from the run seed mixed with a key path such as
//! `(tag, step, window)`. A fork depends only on the root seed and its key,
//! never on how much of the parent stream was consumed, so window iteration
//! order and worker count cannot change the numbers a window sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

/// Identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8+ziggurat-normal/v1";

/// Stream tags used by the pipeline.
pub mod tag {
    pub const INITIAL_NOISE: u64 = 1;
    pub const GMG_RENOISE: u64 = 2;
    pub const REBALANCE: u64 = 3;
    pub const STAGE_LOW_RES: u64 = 4;
    pub const STAGE_HIGH_RES: u64 = 5;
}

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Child stream for `key`, derived from this stream's seed alone.
    pub fn fork(&self, key: &[u64]) -> SeededRng {
        let mut h = splitmix64(self.seed ^ 0x5157_4f52_4b45_4459);
        for &k in key {
            h = splitmix64(h ^ splitmix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        SeededRng::new(h)
    }

    pub fn normal<S: Scalar>(&mut self) -> S {
        let v: f64 = self.inner.sample(StandardNormal);
        S::of(v)
    }

    pub fn fill_normal<S: Scalar>(&mut self, out: &mut [S]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
