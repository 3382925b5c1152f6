//! Named random streams derived from one master seed.
//!
//! Stream `(purpose, player)` is ChaCha8 seeded with the master seed and
//! positioned on stream id `(purpose << 32) | player`. Streams never share
//! state, so changing how one of them is consumed (for instance switching
//! the estimator) leaves every other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    /// Per-player exploration directions.
    Directions = 1,
    /// Per-player delays (heterogeneous kind).
    Delays = 2,
    /// The single delay stream shared by all players (homogeneous kind).
    SharedDelays = 3,
}

pub fn stream(seed: u64, purpose: StreamPurpose, player: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | player as u64);
    rng
}
