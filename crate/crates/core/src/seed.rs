//! Seed fan-out.
//!
//! Every random stream in an experiment is derived from one master seed by
//! hashing a textual label and an index into it:
//!
//! ```text
//! derive(master, label, index) = splitmix64(master ^ fnv1a64(label) ^ splitmix64(index))
//! ```
//!
//! The derivation depends only on its arguments, so the stream a run sees
//! does not change when other runs are added or removed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Derive a child seed for the stream `label` / `index`.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
