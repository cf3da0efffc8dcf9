//! Seed derivation for every stochastic stage of a run.
//!
//! Each random stream is keyed by `(master, generation, individual, purpose)` and
//! mixed with the SplitMix64 finalizer:
//!
//! ```text
//! mix(z)  = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^ (z >> 31)
//! h0      = mix(master ^ 0x9E3779B97F4A7C15)
//! h1      = mix(h0 ^ (generation + 1 * 0x9E3779B97F4A7C15))
//! h2      = mix(h1 ^ (individual + 2 * 0x9E3779B97F4A7C15))
//! seed    = mix(h2 ^ (purpose    + 3 * 0x9E3779B97F4A7C15))
//! ```
//!
//! All arithmetic is wrapping on `u64` values, so the result does not depend on
//! host byte order. The constants above are part of the output contract: changing
//! them changes every run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u64)]
pub enum Purpose {
    ModelInit = 1,
    AlphaTrain = 2,
    Population = 3,
    Variation = 4,
    Reinit = 5,
    Retrain = 6,
    BaselineInit = 7,
    BaselineTrain = 8,
}

impl Purpose {
    pub const ALL: [Purpose; 8] = [
        Purpose::ModelInit,
        Purpose::AlphaTrain,
        Purpose::Population,
        Purpose::Variation,
        Purpose::Reinit,
        Purpose::Retrain,
        Purpose::BaselineInit,
        Purpose::BaselineTrain,
    ];

    pub fn tag(self) -> u64 {
        self as u64
    }
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, generation: u64, individual: u64, purpose: Purpose) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    h = mix64(h ^ generation.wrapping_add(GOLDEN));
    h = mix64(h ^ individual.wrapping_add(GOLDEN.wrapping_mul(2)));
    mix64(h ^ purpose.tag().wrapping_add(GOLDEN.wrapping_mul(3)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, generation: u64, individual: u64, purpose: Purpose) -> Rng {
    rng_from_seed(derive_seed(master, generation, individual, purpose))
}
