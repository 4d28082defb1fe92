//! Stable derivation of purpose-specific RNG seeds from one base seed.
//!
//! Hand-rolled FNV-1a + splitmix64 finalizer so that seed streams never
//! change across library or std versions.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for a named sub-stream of `base`.
pub fn mix_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(base ^ h)
}

/// Seed for the `idx`-th element of a named sub-stream.
pub fn mix_seed_idx(base: u64, tag: &str, idx: u64) -> u64 {
    splitmix64(mix_seed(base, tag) ^ splitmix64(idx))
}
