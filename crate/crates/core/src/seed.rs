//! Every random stream in a run is derived from the single run seed.

use sha2::{Digest, Sha256};

/// Seed for the named sub-stream of `seed`.
pub fn derive(seed: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}
