//! The one pseudo-random generator used across the crate: ChaCha8 seeded
//! through `SeedableRng::seed_from_u64`. Its output stream is fixed by the
//! algorithm, so seeded runs reproduce across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
