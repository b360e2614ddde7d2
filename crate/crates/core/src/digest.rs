//! Stable hashing helpers for deterministic mocks and content fingerprints.

use sha2::{Digest, Sha256};

fn hasher(parts: &[&[u8]]) -> Sha256 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h
}

pub fn hex(parts: &[&[u8]]) -> String {
    hasher(parts)
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn seed(parts: &[&[u8]]) -> u64 {
    let out = hasher(parts).finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Uniform draw in `[0, 1)` fixed by the inputs.
pub fn unit(parts: &[&[u8]]) -> f64 {
    (seed(parts) >> 11) as f64 / (1u64 << 53) as f64
}
