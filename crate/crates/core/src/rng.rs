//! Seeded random streams. Every parallel task draws from its own ChaCha
//! stream keyed by `(seed, task index)`, so results do not depend on the
//! thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
