//! Seeded random streams.
//!
//! Every random consumer draws from `ChaCha8Rng::seed_from_u64(seed)` on its
//! own stream, so results are reproducible across runs and platforms and the
//! consumers never perturb one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream assignment for a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Random MDP construction.
    Generator = 0,
    /// Dataset records (and the streaming sampler, which reproduces them).
    Dataset = 1,
    /// Solver-side draws: next actions in the average setting and the output index.
    Solver = 2,
    /// Monte-Carlo evaluation helpers.
    Evaluation = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
