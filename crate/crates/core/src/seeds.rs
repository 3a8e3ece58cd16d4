//! Deterministic seed derivation.
//!
//! Every random stage draws from its own stream, keyed by the master seed,
//! the repetition index and a stage label. Streams never depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, then mixed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Seed for repetition `rep` of the stage named `stage`.
pub fn derive_seed(master: u64, rep: u64, stage: &str) -> u64 {
    mix64(mix64(master ^ hash_label(stage)).wrapping_add(mix64(rep.wrapping_add(1))))
}

/// Seed for a sub-stream indexed by integers, e.g. (replicate, node).
pub fn substream(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix64(seed), |acc, &k| mix64(acc ^ mix64(k.wrapping_add(GOLDEN))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform value in [0, 1) determined only by the hash inputs.
pub fn hashed_unit(seed: u64, keys: &[u64]) -> f64 {
    (substream(seed, keys) >> 11) as f64 / (1u64 << 53) as f64
}
