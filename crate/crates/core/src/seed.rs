//! Seed splitting.
//!
//! Every randomized stage draws from its own generator whose seed is derived
//! from a parent seed and a stage name:
//!
//! ```text
//! derive_seed(parent, name) = splitmix64(parent ^ fnv1a64(name))
//! ```
//!
//! Per-item streams (one per attacked motion, for example) chain a second
//! derivation with the item index, so results never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stage `name` under `parent`.
pub fn derive_seed(parent: u64, name: &str) -> u64 {
    splitmix64(parent ^ fnv1a64(name.as_bytes()))
}

/// Seed for item `index` of a stream.
pub fn item_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Generator for the stage `name` under `parent`.
pub fn stage_rng(parent: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, name))
}
