//! Seed derivation for reproducible, order-independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random stream in the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with two counters into an independent 64-bit seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ a.rotate_left(17)) ^ b.rotate_left(41))
}

/// FNV-1a over the bytes of `s`; stable across platforms and releases.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}

/// A fresh stream for `(base, a, b)`.
pub fn stream(base: u64, a: u64, b: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(1, 2, 3), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(1, 2, 3), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn counters_decorrelate() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 1, 0));
        assert_ne!(stable_hash("or_mat"), stable_hash("or_mat_spa"));
    }
}
