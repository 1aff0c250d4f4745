//! SHA-256 helpers.

use sha2::{Digest as _, Sha256};

/// A 32-byte SHA-256 output.
pub type Digest = [u8; 32];

pub fn sha256(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// Hashes the concatenation of `parts` without allocating.
pub fn sha256_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn to_hex(d: &[u8]) -> String {
    hex::encode(d)
}

/// Parses a lowercase or uppercase 64-character hex digest.
pub fn digest_from_hex(s: &str) -> Option<Digest> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).ok()?;
    Some(out)
}
