//! Stable seed derivation.
//!
//! Everything random in the crate is driven by [`rng`] on a `u64` seed; child
//! seeds come from [`derive`], which hashes a parent seed together with a
//! label so that independent streams never collide. The hash is fixed here
//! (FNV-1a followed by a SplitMix64 finalizer) rather than borrowed from
//! `std`, whose hasher output is allowed to change between releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Incremental FNV-1a hasher with a SplitMix64 finish.
#[derive(Debug, Clone)]
pub struct SeedHasher(u64);

impl Default for SeedHasher {
    fn default() -> Self {
        SeedHasher(0xcbf2_9ce4_8422_2325)
    }
}

impl SeedHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        for &b in data {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // field separator so ("ab","c") and ("a","bc") differ
        self.0 ^= 0xff;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        self
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn finish(&self) -> u64 {
        splitmix64(self.0)
    }
}

/// Child seed for a labelled sub-stream of `parent`.
pub fn derive(parent: u64, label: &str) -> u64 {
    SeedHasher::new().u64(parent).str(label).finish()
}

/// Child seed for the `index`-th iteration of a labelled sub-stream.
pub fn derive_indexed(parent: u64, label: &str, index: u64) -> u64 {
    SeedHasher::new().u64(parent).str(label).u64(index).finish()
}
