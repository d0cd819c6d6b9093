//! Deterministic seeding helpers.
//!
//! All randomness in the engine flows through ChaCha8 generators, which are
//! counter-based: a `(key, stream, word position)` triple addresses any point
//! of the keystream directly. Strategy randomness, per-arm sample schedules
//! and synthetic correctness draws use disjoint streams so they never alias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for strategy decisions (exploration coin flips, posterior draws).
pub const STRATEGY_STREAM: u64 = 0;

/// Base stream for per-arm sample permutations; arm `i` uses `PERMUTATION_STREAM_BASE + i`.
pub const PERMUTATION_STREAM_BASE: u64 = 1 << 32;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash of a string, independent of the std hasher.
pub fn stable_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for iteration `k` of a batch study: `mix64(base ^ mix64(k + 1))`.
pub fn derive_seed(base_seed: u64, iteration: u64) -> u64 {
    mix64(base_seed ^ mix64(iteration.wrapping_add(1)))
}

/// Generator keyed by `seed`, positioned at the start of `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
