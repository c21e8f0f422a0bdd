//! Seeded generators.
//!
//! Every sampling entry point takes an explicit `u64` seed. Independent
//! streams for trials are derived as `seed ^ trial_index` before any
//! parallel dispatch, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for a root seed.
pub fn rng_for(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> SimRng {
    rng_for(seed ^ index)
}

/// Well-mixed child seed for a numbered sub-stream (e.g. one search probe).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
