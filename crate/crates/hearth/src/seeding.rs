//! Deterministic randomness plumbing.
//!
//! Every stage draws from one root seed through *named substreams* so stages
//! can rerun independently and still reproduce bytewise-identical artifacts.
//! Per-query corruption draws (estimator personas) are derived by hashing the
//! query content rather than by advancing a shared stream, which makes them
//! pure functions of their inputs and safe to evaluate in any order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a hash. Not cryptographic; stable across runs,
/// platforms, and releases, which `std`'s hasher does not guarantee.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates structured inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` for the substream named `label`.
pub fn derive(root: u64, label: &str) -> u64 {
    splitmix(root ^ fnv1a(label.as_bytes()))
}

/// Derive a child seed keyed by a label and an index (e.g. per-trajectory).
pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    splitmix(derive(root, label) ^ splitmix(index))
}

/// Seeded RNG for the substream named `label`.
pub fn rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label))
}

/// Map a 64-bit hash onto the unit interval [0, 1).
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Hash arbitrary string parts into one content fingerprint.
pub fn fingerprint(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        h = fnv1a(p.as_bytes()) ^ h.wrapping_mul(0x1_0000_0000_01b3);
    }
    splitmix(h)
}
