//! Seed derivation and per-purpose random streams.
//!
//! A single master seed is expanded by hashing it together with a path of
//! integers (sweep point, replication, stream tag) through SplitMix64. Every
//! consumer of randomness in a run draws from its own ChaCha8 stream, so the
//! graph realized for a replication does not depend on the update schedule,
//! the tie-break draws or the weighting scheme.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of indices.
///
/// `derive_seed(s, &[a, b])` equals `derive_seed(derive_seed(s, &[a]), &[b])`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |acc, &x| {
        mix64(acc.wrapping_add(GOLDEN_GAMMA) ^ mix64(x.wrapping_add(GOLDEN_GAMMA)))
    })
}

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Graph = 1,
    Selection = 2,
    TieBreak = 3,
    Weights = 4,
    Sampling = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, &[stream as u64]))
}
