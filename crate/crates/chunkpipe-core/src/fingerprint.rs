//! Stable hex fingerprints for configs and corpora.
//!
//! Fingerprints tie every pipeline artifact back to the exact configuration
//! and chunk set that produced it. They are SHA-256 based and truncated to 16
//! hex characters, which is plenty for collision-free bookkeeping at corpus
//! scale.

use sha2::{Digest, Sha256};

use crate::corpus::Chunk;

/// Fingerprint arbitrary bytes.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex_prefix(&digest)
}

/// Fingerprint a serializable value via its canonical JSON encoding.
/// Struct fields serialize in declaration order, so the encoding is stable
/// for a given type.
pub fn fingerprint_json<T: serde::Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let encoded = serde_json::to_vec(value)?;
    Ok(fingerprint_bytes(&encoded))
}

/// Fingerprint a chunk list by id and body, in order.
pub fn fingerprint_chunks(chunks: &[Chunk]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update(chunk.chunk_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(chunk.body.as_bytes());
        hasher.update([b'\n']);
    }
    hex_prefix(&hasher.finalize())
}

fn hex_prefix(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
