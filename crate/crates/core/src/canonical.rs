//! Canonical JSON encoding: object keys sorted, no insignificant whitespace.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serializes `value` to canonical JSON bytes.
///
/// Going through `serde_json::Value` sorts every object's keys, so the byte
/// form is independent of struct field declaration order.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("canonical value serializes");
    serde_json::to_vec(&v).expect("json value encodes")
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("json is utf-8")
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
