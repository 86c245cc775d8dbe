//! Seed derivation: every stage draws its randomness from a seed obtained
//! by hashing the root seed with a stage tag, so partial re-runs reproduce.
//!
//! The derivation is `splitmix64(root XOR fnv1a64(tag))` and is part of the
//! observable behavior (documented here so external tooling can precompute
//! stage seeds).

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stage seed for `tag` under the given root seed.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    splitmix64(root ^ fnv1a64(tag.as_bytes()))
}
