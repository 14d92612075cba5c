//! Deterministic derivation of independent random streams.
//!
//! Every unit of work (population, sample, sequence, inner randomization
//! test) gets its own stream, keyed by the master seed and a path of
//! integers identifying the unit. Streams never share mutable state, so
//! results cannot depend on thread count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent ChaCha8 stream from a master seed and a work-unit
/// path. Identical `(master_seed, path)` always yields the identical stream.
pub fn derive_rng(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    for part in path {
        hasher.update(part.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Fold a textual label into a master seed, producing a new master seed.
///
/// Used when a sweep wants fresh, independent populations per scheme instead
/// of reusing one population set across schemes.
pub fn mix_label(master_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
