//! Seed derivation.
//!
//! Every random draw in the workbench comes from a `ChaCha8Rng` seeded with a
//! 64-bit value. Seeds for distinct use sites are derived from a base seed, a
//! purpose tag and a list of cell indices:
//!
//! ```text
//! h0 = splitmix64(base ^ fnv1a64(tag))
//! h_{k+1} = splitmix64(h_k ^ splitmix64(index_k + 0x9E3779B97F4A7C15))
//! ```
//!
//! `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64
//! generator; `fnv1a64` is the 64-bit FNV-1a hash of the tag's UTF-8 bytes.
//! Both are fixed here so derived seeds are stable across platforms and
//! releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags used when deriving per-stage seeds.
pub mod tag {
    pub const DATA: &str = "data";
    pub const NOISE: &str = "noise";
    pub const SPLIT: &str = "split";
    pub const INIT: &str = "init";
    pub const EVAL: &str = "eval";
    pub const SAMPLE_PAIRS: &str = "pairs";
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives a seed for one use site from `(base, tag, indices)`.
pub fn derive_seed(base: u64, tag: &str, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(base ^ fnv1a64(tag.as_bytes())), |h, &i| {
            splitmix64(h ^ splitmix64(i.wrapping_add(GOLDEN_GAMMA)))
        })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
