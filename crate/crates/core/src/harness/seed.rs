use sha2::{Digest, Sha256};

/// Derives an independent seed for one (domain, index) stream.
///
/// SHA-256 over a fixed tag, the master seed, the length-prefixed domain
/// and the index, all little-endian; the first eight digest bytes form the
/// result. Stable across runs, platforms and releases.
pub fn derive_seed(master_seed: u64, domain: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"fedguard/seed/v1");
    h.update(master_seed.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
