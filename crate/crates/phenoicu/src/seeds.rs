//! Deterministic seed derivation for parallel work.
//!
//! Every parallel loop (per-patient generation, per-tree training, per-resample
//! bootstrap) derives an independent child seed from the run seed, a stream
//! label and an index. Results are then independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap, stable.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes; also used for content hashes in manifests and
/// schema fingerprints.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn fnv1a(s: &str) -> u64 {
    fnv64(s.as_bytes())
}

/// Derive a child seed for `(stream, index)` under a base seed.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    mix(base ^ fnv1a(stream).rotate_left(17) ^ mix(index))
}

/// Deterministic RNG for a derived stream.
pub fn stream_rng(base: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}
