//! Seed plumbing. Every random stream derives from one root seed by a fixed offset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Offsets added to the root seed for each subsystem.
pub mod offset {
    pub const INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const EVAL_NEGATIVES: u64 = 3;
    pub const RANK_EVAL: u64 = 4;
    pub const NEIGHBOR_SAMPLING: u64 = 5;
    pub const LANDSCAPE: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive(root: u64, offset: u64) -> u64 {
    splitmix64(root.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless stream keyed by `(seed, a, b)`; used where sampling must not depend on
/// evaluation order.
pub fn keyed(seed: u64, a: u64, b: u64) -> Rng {
    seeded(splitmix64(splitmix64(seed ^ a).wrapping_add(b)))
}
