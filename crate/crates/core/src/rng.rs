//! Deterministic seed fan-out.
//!
//! A single run seed expands into independent named streams, so adding a new
//! randomized component never perturbs the draws of existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives a 32-byte sub-seed from a root seed and a component name.
pub fn derive_seed(root: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(b"/");
    hasher.update(name.as_bytes());
    hasher.finalize().into()
}

/// A seeded stream for the named component.
pub fn stream(root: u64, name: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(root, name))
}

/// A per-item stream, e.g. one per generated sample.
pub fn indexed_stream(root: u64, name: &str, index: u64) -> ChaCha20Rng {
    stream(root, &format!("{name}#{index}"))
}

/// A derived sub-seed as a plain u64, for components that take one.
pub fn derive_u64(root: u64, name: &str) -> u64 {
    let bytes = derive_seed(root, name);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}
