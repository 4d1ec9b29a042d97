//! Seeded, portable random draws.
//!
//! All randomized operations draw from a ChaCha8 stream seeded with an
//! explicit 64-bit seed, through the helpers below. The draw procedures are
//! fixed and documented so that a given seed reproduces byte-identical
//! output across platforms and releases:
//!
//! * integers below `n`: 64-bit rejection sampling (reject draws in the
//!   final partial multiple of `n`, then take the remainder),
//! * reals in `[0, 1)`: the top 53 bits of one 64-bit draw, scaled by 2⁻⁵³.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The stream every seeded operation draws from.
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn from_seed(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`. Unbiased via rejection sampling.
    pub fn uniform_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = (u64::MAX / n) * n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn uniform_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        lo + self.uniform_below(hi - lo + 1)
    }

    /// Uniform real in `[0, 1)` with 53-bit resolution.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }
}

/// Per-image seed derivation for parallel batch runs:
/// `seed XOR fnv1a64(image_id)`.
pub fn derive_seed(seed: u64, image_id: &str) -> u64 {
    seed ^ fnv1a64(image_id.as_bytes())
}

/// FNV-1a 64-bit hash. Spelled out here (rather than `std::hash`) because
/// the derived seeds are part of the reproducibility contract and must not
/// drift with standard-library hasher changes.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_stream() {
        let mut a = SeededRng::from_seed(7);
        let mut b = SeededRng::from_seed(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_below_in_range() {
        let mut rng = SeededRng::from_seed(1);
        for n in [1u64, 2, 3, 7, 1000] {
            for _ in 0..200 {
                assert!(rng.uniform_below(n) < n);
            }
        }
    }

    #[test]
    fn uniform_f64_in_unit_interval() {
        let mut rng = SeededRng::from_seed(2);
        for _ in 0..1000 {
            let v = rng.uniform_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn derived_seeds_differ_per_image() {
        assert_ne!(derive_seed(42, "img_001"), derive_seed(42, "img_002"));
        assert_eq!(derive_seed(42, "img_001"), derive_seed(42, "img_001"));
    }
}
