//! Named sub-seed derivation.
//!
//! Every random stream in the pipeline is derived from one root seed and a
//! path of labels/indices, so results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from `parent`, a stage label and a list of indices.
pub fn derive(parent: u64, label: &str, indices: &[u64]) -> u64 {
    let mut s = splitmix64(parent ^ hash_label(label));
    for &i in indices {
        s = splitmix64(s ^ i.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(parent: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    rng(derive(parent, label, indices))
}
