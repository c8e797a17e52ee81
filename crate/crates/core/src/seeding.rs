//! Deterministic RNG streams.
//!
//! Work that may run in parallel (per-sample generation, Monte-Carlo draws)
//! gets its own ChaCha stream keyed by index, so results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream ids used by the experiment harness for one seed.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
}

pub fn rng_from_seed(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a fresh base seed from `rng` for deriving indexed streams.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
