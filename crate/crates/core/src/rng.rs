//! Named random streams split from one 64-bit master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream identifiers. Agents run with the same master seed
/// share the environment-noise stream, which pairs their comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EnvNoise = 1,
    PsrlSampling = 2,
    Exploration = 3,
    Bootstrap = 4,
    EnvGeneration = 5,
    Mesh = 6,
}

pub fn stream(master: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(which as u64);
    rng
}
