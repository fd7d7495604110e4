//! Seed derivation and deterministic RNG construction.
//!
//! Everything in this crate that consumes randomness takes an explicit
//! `u64` seed and builds a [`ChaCha8Rng`] from it, so any artifact can be
//! regenerated byte-for-byte from the run manifest. Per-instance seeds are
//! derived from a (global seed, index) pair with a splitmix-style mix so
//! instances are independent and generation parallelizes without shared
//! state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a global seed with a stream index into an independent sub-seed.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined state
    let mut z = global ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
