//! Seeded random streams.
//!
//! Every replication draws from its own ChaCha stream whose 256-bit key is the
//! SHA-256 digest of `(master_seed, replication_index)`. Streams for distinct
//! indices are therefore independent for all practical purposes, and a stream
//! never depends on how many other streams were opened before it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha12Rng;

/// Open the stream for `(master_seed, index)`.
pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(b"compromise/stream");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha12Rng::from_seed(key)
}

/// Derive a child seed from a parent seed and a list of labels. Used to give
/// each macro-replication of an experiment its own master seed.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"compromise/derive");
    hasher.update(parent.to_le_bytes());
    for l in labels {
        hasher.update(l.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
