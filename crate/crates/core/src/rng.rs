//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a stream identified by
//! `(global seed, tag, index)`. The key is hashed into a ChaCha8 key, so
//! streams are independent of each other and of the order in which they
//! are created. Adding a detector or reordering scan points leaves all
//! other streams untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey<'a> {
    pub seed: u64,
    pub tag: &'a str,
    pub index: u64,
}

impl<'a> StreamKey<'a> {
    pub fn new(seed: u64, tag: &'a str, index: u64) -> Self {
        StreamKey { seed, tag, index }
    }

    pub fn rng(&self) -> StreamRng {
        let mut h = Sha256::new();
        h.update(b"franson-stream-v1");
        h.update(self.seed.to_le_bytes());
        h.update((self.tag.len() as u64).to_le_bytes());
        h.update(self.tag.as_bytes());
        h.update(self.index.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// Shorthand for `StreamKey::new(seed, tag, index).rng()`.
pub fn stream(seed: u64, tag: &str, index: u64) -> StreamRng {
    StreamKey::new(seed, tag, index).rng()
}

/// Derives a child seed, for handing a whole seed family to a sub-run.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, tag, index).next_u64()
}
