//! Named random streams derived from a single run seed.
//!
//! Each role (`"encoder"`, `"batch/17"`, ...) gets its own ChaCha stream keyed
//! by `sha256(seed || role)`, so adding or removing one consumer never shifts
//! the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator for `role` under `seed`.
pub fn stream(seed: u64, role: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(role.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
