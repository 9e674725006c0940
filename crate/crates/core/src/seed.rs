//! Labeled seed derivation.
//!
//! Every stochastic stage draws its generator from one root seed and a
//! stage label, so a single number reproduces a whole experiment while the
//! stages stay statistically independent of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

/// Derives a child seed from `root` and a stage label.
pub fn derive(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Derives a child seed from `root`, a label and an index (per tree, per trial chunk, ...).
pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    derive(derive(root, label), &index.to_string())
}

pub fn rng(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(root: u64, label: &str) -> StageRng {
    rng(derive(root, label))
}

/// Hex SHA-256 of arbitrary bytes; used for artifact digests.
pub fn digest_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
