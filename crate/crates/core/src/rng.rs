//! Deterministic random streams.
//!
//! Every random decision is drawn from a ChaCha8 stream derived from the
//! run seed plus a path of stream identifiers (epoch, example index, ...),
//! so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags keep unrelated uses of one seed apart.
pub mod tag {
    pub const SHUFFLE: u64 = 1;
    pub const AUGMENT: u64 = 2;
    pub const MIXUP: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const TTA: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const SWEEP: u64 = 7;
}
