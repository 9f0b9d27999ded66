//! SHA-256 helpers used for transcript auditing, prompt lineage, and
//! snapshot integrity.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Short (16-hex-char) digest for display contexts.
pub fn short(bytes: &[u8]) -> String {
    let mut d = sha256_hex(bytes);
    d.truncate(16);
    d
}
