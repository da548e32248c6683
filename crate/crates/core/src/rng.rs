//! Seed splitting: every run seed expands into independent per-component streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Components that draw randomness inside one seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Support and values of θ*.
    Parameter = 1,
    /// The training sample stream.
    Samples = 2,
    /// Held-out samples for Monte-Carlo risk estimates.
    Holdout = 3,
    /// Anything a test or bench needs on top.
    Auxiliary = 4,
}

/// Generator for `(seed, stream)`. ChaCha streams are counter-based, so adding a seed
/// or a component never shifts the draws of another.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
