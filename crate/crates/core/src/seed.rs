//! Deterministic randomness.
//!
//! Every random decision in the crate (video shuffles, fold assignment,
//! bootstrap draws, weight init, synthetic noise) flows through
//! [`ChaCha8Rng`] seeded from a `u64`. Shuffles use the Fisher-Yates
//! algorithm with bounded draws computed by widening multiplication
//! (`(next_u64 * bound) >> 64`), so an index sequence depends only on the
//! ChaCha8 keystream and can be reproduced in any language.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `0..bound`.
pub fn bounded(rng: &mut impl RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}

/// Stable 64-bit mix of a seed and a sequence of labels (FNV-1a over the
/// bytes, finished with the SplitMix64 finalizer). Used to derive
/// independent sub-seeds such as one per `(video, representation)`.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for byte in seed.to_le_bytes() {
        h = (h ^ byte as u64).wrapping_mul(PRIME);
    }
    for part in parts {
        for &byte in *part {
            h = (h ^ byte as u64).wrapping_mul(PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h = (h ^ 0xff).wrapping_mul(PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation_and_repeatable() {
        let mut a: Vec<usize> = (0..50).collect();
        let mut b = a.clone();
        shuffle(&mut rng_from_seed(7), &mut a);
        shuffle(&mut rng_from_seed(7), &mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(a, sorted);
    }

    #[test]
    fn bounded_stays_in_range() {
        let mut rng = rng_from_seed(1);
        for bound in 1..40 {
            for _ in 0..50 {
                assert!(bounded(&mut rng, bound) < bound);
            }
        }
    }

    #[test]
    fn derived_seeds_separate_parts() {
        let a = derive_seed(1, &[b"ab", b"c"]);
        let b = derive_seed(1, &[b"a", b"bc"]);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(1, &[b"ab", b"c"]));
        assert_ne!(a, derive_seed(2, &[b"ab", b"c"]));
    }
}
