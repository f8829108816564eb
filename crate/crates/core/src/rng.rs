//! Named, order-independent RNG substreams.
//!
//! Every random decision in the crate draws from a ChaCha stream whose seed
//! is `sha256(seed || label || key)`, so results never depend on iteration
//! order or on how many draws another component made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Derives a 64-bit seed for the substream `(seed, label, key)`.
pub fn derive_seed(seed: u64, label: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn substream(seed: u64, label: &str, key: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, key))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "a", "x"), derive_seed(7, "a", "x"));
        assert_ne!(derive_seed(7, "a", "x"), derive_seed(7, "a", "y"));
        assert_ne!(derive_seed(7, "a", "x"), derive_seed(8, "a", "x"));
        // label/key boundary is unambiguous
        assert_ne!(derive_seed(7, "ab", "c"), derive_seed(7, "a", "bc"));
        let a: u64 = substream(1, "s", "k").random();
        let b: u64 = substream(1, "s", "k").random();
        assert_eq!(a, b);
    }
}
