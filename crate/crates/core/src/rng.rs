//! Seeding conventions.
//!
//! All randomness flows from a single `u64` seed through ChaCha8 streams.
//! Parallel batch work gives item `i` its own stream, so results are
//! bit-identical regardless of thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for stream `stream` of the generator family identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable derived seed for a named sub-stage of a larger computation.
///
/// FNV-1a over the label, folded into the parent seed. Used where a stage
/// needs an independent seed rather than a stream of the same seed.
pub fn stage_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}
