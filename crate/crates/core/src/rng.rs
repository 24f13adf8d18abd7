//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness asks for its own stream, so changing how many
//! numbers one stage draws never perturbs another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Train = 3,
    Finetune = 4,
    Clustering = 5,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for one repetition of a stage, e.g. the fine-tune after each pruned layer.
pub fn indexed_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn indexed_substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    substream(indexed_seed(seed, index), stream)
}
