use sha2::{Digest, Sha256};

/// Derives an independent 64-bit stream seed from a base seed and labels.
///
/// Streams keyed this way do not depend on iteration order, so per-battery
/// or per-cycle work can run in any order and still draw the same numbers.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
