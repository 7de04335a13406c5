//! Seed derivation and rounding helpers shared by the pipeline stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent stream seed from a master seed.
///
/// SplitMix64 finaliser over `base ^ stream·golden`; distinct streams of the
/// same master seed give uncorrelated generators.
pub fn derive(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Round-half-up of `x` to a count. Negative inputs clamp to zero.
pub fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as usize
    }
}
