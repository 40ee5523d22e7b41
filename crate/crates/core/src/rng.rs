//! Random sources.
//!
//! Every random stream in the crate is a ChaCha8 generator (`rand_chacha`),
//! which produces the same sequence on every platform for a given 64-bit
//! seed. Gaussian variates come from `rand_distr::StandardNormal`.
//!
//! Sub-seeds are derived with a counter scheme: `derive_seed(base, k)` is
//! the SplitMix64 finalizer applied to `base + (k + 1) * 0x9E3779B97F4A7C15`.
//! Distinct counters give statistically independent streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(base: u64, counter: u64) -> u64 {
    let mut z = base.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
