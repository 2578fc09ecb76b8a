//! Seeded random source shared by every stochastic routine.
//!
//! All randomness goes through ChaCha8 seeded from a `u64`, and normal
//! variates through the ziggurat `StandardNormal` sampler of `rand_distr`.
//! Both are specified bit-for-bit, so a seed reproduces the same stream on
//! every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn standard_normal(rng: &mut Rng64) -> f64 {
    StandardNormal.sample(rng)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer) so that
/// per-sample or per-cell generators do not overlap.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
