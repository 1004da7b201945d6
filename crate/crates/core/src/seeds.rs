//! Deterministic derivation of child seeds from a master seed.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `stream` under `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    mix(master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(mix(stream)))
}
