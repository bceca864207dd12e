//! Counter-based splittable randomness.
//!
//! Every random decision in the crate is keyed by a path of integers hung off
//! the experiment seed (epoch, step, query index, synthetic slot, ...). Keys
//! are cheap values; deriving a child never mutates the parent, so work items
//! can be processed in any order, or in parallel, without changing a single
//! draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to fold path components into a key.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A point in the key tree. Obtain streams with [`RngKey::stream`], children
/// with [`RngKey::child`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngKey(u64);

impl RngKey {
    pub fn from_seed(seed: u64) -> Self {
        RngKey(mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    }

    /// Derive the child key for one path component.
    #[must_use]
    pub fn child(self, tag: u64) -> Self {
        RngKey(mix(self.0 ^ mix(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    /// A full generator for this key. ChaCha8 is platform-independent, so the
    /// stream is reproducible everywhere.
    pub fn stream(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Uniform draw from the open interval (0, 1): endpoint draws are rejected.
pub fn open01<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 && x < 1.0 {
            return x;
        }
    }
}
