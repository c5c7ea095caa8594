//! Deterministic RNG stream derivation.
//!
//! Every randomized routine takes a base seed and derives one independent
//! stream per logical task (mask index, bootstrap repetition, tomography
//! setting, ...). Results are then reproducible bit-for-bit regardless of
//! thread count or scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 output function; good avalanche, cheap, stable across platforms.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` and `stream` into a single well-scrambled 64-bit value.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let a = mix64(base.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(stream.wrapping_add(0x6a09_e667_f3bc_c909));
    mix64(a ^ b.rotate_left(32))
}

/// RNG for logical task `stream` under `base`. Distinct streams are
/// statistically independent for the purposes of this crate.
pub fn stream_rng(base: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(base, stream))
}
