//! SHA-256 helpers shared across modules (prompt checksums, cache keys,
//! run-manifest digests).

use sha2::{Digest, Sha256};

/// Hex digest of a byte string.
pub fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hex::encode(hasher.finalize())
}

/// Hex digest of several parts, length-prefixed so part boundaries are
/// unambiguous.
pub fn sha256_hex_parts<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// First `n` hex characters of a digest, for file names.
pub fn short(digest: &str, n: usize) -> &str {
    &digest[..n.min(digest.len())]
}

/// Deterministic 64-bit seed derived from a base seed and a label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_be_bytes());
    hasher.update(label.as_bytes());
    let out = hasher.finalize();
    u64::from_be_bytes(out[..8].try_into().expect("digest is at least 8 bytes"))
}
