//! Seed derivation.
//!
//! A run carries one root seed. Components draw their own stream from a named
//! sub-seed: `splitmix64(root ^ fnv1a64(name))`. Both functions are fixed here
//! so that logs written by one build stay reproducible by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const IGNITION: &str = "ignition";
pub const POLICY: &str = "policy";
pub const OPTIMIZER: &str = "optimizer";
pub const TERRAIN: &str = "terrain";
pub const WIND: &str = "wind";

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Named sub-seed of `root`.
pub fn derive(root: u64, name: &str) -> u64 {
    splitmix64(root ^ fnv1a64(name.as_bytes()))
}

/// Sub-seed of `root` for the `index`-th member of a family (episodes, candidates).
pub fn derive_indexed(root: u64, name: &str, index: u64) -> u64 {
    splitmix64(derive(root, name) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
