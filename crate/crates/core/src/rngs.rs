//! Seed derivation for reproducible parallel sampling.
//!
//! Every randomized computation is keyed by `(master seed, domain, index)`.
//! Workers derive their own stream from that triple, so results are identical
//! regardless of how work is split across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated sampling stages on disjoint streams.
pub mod domain {
    pub const KRONECKER: u64 = 0x01;
    pub const LAWS: u64 = 0x02;
    pub const EDGE_TIMES: u64 = 0x03;
    pub const LABELS: u64 = 0x04;
    pub const NS_SAMPLE: u64 = 0x05;
    pub const INSTANCE: u64 = 0x06;
    pub const SHUFFLE: u64 = 0x07;
}

/// SplitMix64 finalizer; decorrelates nearby integer inputs.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive the sub-seed for `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain) ^ splitmix64(splitmix64(index)))
}

/// A ChaCha stream tied to `(seed, domain, index)`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, index))
}
