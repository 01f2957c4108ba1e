//! Labeled seed derivation and the keyed hash used by every sketch.
//!
//! All randomness in the crate descends from one root seed. A child seed is
//! obtained by folding labels into the parent, so a component can be replayed
//! in isolation from `(root, component, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed 64-bit hash of an index.
#[inline]
pub fn keyed_hash(key: u64, x: u64) -> u64 {
    splitmix64(key ^ splitmix64(x.wrapping_mul(GOLDEN) ^ 0x2545_f491_4f6c_dd1d))
}

/// FNV-1a over a string label.
pub fn label(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Folds a sequence of labels into `root`.
pub fn derive(root: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(root), |acc, l| splitmix64(acc ^ splitmix64(*l)))
}

/// Convenience for the common `(component, purpose, index)` derivation.
pub fn derive_named(root: u64, component: &str, purpose: &str, index: u64) -> u64 {
    derive(root, &[label(component), label(purpose), index])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Maps a 64-bit hash onto `[0, width)` without modulo bias.
#[inline]
pub fn reduce(h: u64, width: usize) -> usize {
    ((u128::from(h) * width as u128) >> 64) as usize
}
