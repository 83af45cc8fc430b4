//! Seed derivation. Every random stream in the pipeline is a ChaCha8 generator
//! keyed by a SHA-256 digest of a root seed and a path of string labels, so
//! streams are independent of each other and of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, labels: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    hasher.finalize().into()
}

pub fn stream(seed: u64, labels: &[&str]) -> Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, labels))
}

pub fn derive_u64(seed: u64, labels: &[&str]) -> u64 {
    let bytes = derive_seed(seed, labels);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}
