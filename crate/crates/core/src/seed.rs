//! Deterministic sub-seed derivation.
//!
//! All randomness in the crate flows from one root seed. Replicates,
//! samples, and comparisons each draw their own RNG from a sub-seed derived
//! by stable hashing of (root, purpose, index), so parallel and serial
//! execution produce identical results.

/// FNV-1a over the purpose string, then splitmix64-style mixing of the
/// root, the purpose hash, and the index. Stable across platforms and
/// releases.
pub fn derive_seed(root: u64, purpose: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    let mut z = root
        .wrapping_add(h.rotate_left(23))
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
