use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compact JSON used for hashing. Struct fields serialize in declaration
/// order and maps keep insertion order, so the bytes are stable for a value.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("artifact types serialize infallibly")
}

/// Short content address: the first 16 hex digits of the canonical JSON hash.
pub fn content_id<T: Serialize>(value: &T) -> String {
    let mut full = sha256_hex(&canonical_json(value));
    full.truncate(16);
    full
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn content_id_is_short_and_stable() {
        let a = content_id(&vec!["x", "y"]);
        assert_eq!(a.len(), 16);
        assert_eq!(a, content_id(&vec!["x", "y"]));
        assert_ne!(a, content_id(&vec!["y", "x"]));
    }
}
