//! Named sub-seeds derived from one top-level seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for the component called `name`.
pub fn derive(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Derives the seed for item `index` of a stream.
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_give_distinct_streams() {
        assert_ne!(derive(7, "corpus"), derive(7, "init"));
        assert_eq!(derive(7, "corpus"), derive(7, "corpus"));
        assert_ne!(derive_indexed(7, 0), derive_indexed(7, 1));
    }
}
