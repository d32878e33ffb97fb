//! Deterministic seed derivation.
//!
//! A single master seed fans out into independent streams identified by a
//! label and a counter. The derivation is counter-based, so adding a new
//! stream (a new method, a new sweep point) never shifts the draws of
//! existing streams.
//!
//! Rule: `seed = mix(mix(master ^ fnv1a(label)) ^ mix(counter))` where `mix`
//! is the SplitMix64 finalizer. Consumers turn the derived seed into a
//! `ChaCha12Rng` via [`rng_from`].

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the stream label.
fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Derive a child seed from `(master, label, counter)`.
pub fn derive_seed(master: u64, label: &str, counter: u64) -> u64 {
    mix(mix(master ^ fnv1a(label)) ^ mix(counter))
}

/// A seeded RNG for the given stream coordinates.
pub fn rng_from(master: u64, label: &str, counter: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label, counter))
}

/// A seeded RNG directly from a raw seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(42, "gen", 0), derive_seed(42, "gen", 0));
    }

    #[test]
    fn streams_are_distinct() {
        let a = derive_seed(42, "gen", 0);
        let b = derive_seed(42, "gen", 1);
        let c = derive_seed(42, "mech", 0);
        let d = derive_seed(43, "gen", 0);
        assert!(a != b && a != c && a != d && b != c);
    }
}
