//! Random-source helpers and the deterministic replica seeding scheme.
//!
//! Every Monte Carlo replica `i` of an experiment seeded with `base` draws
//! from `ChaCha8Rng::seed_from_u64(replica_seed(base, i))`. The mixer is a
//! splitmix64 step applied to `base ^ (i * GOLDEN)`:
//!
//! ```text
//! z = base ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15)
//! z = z.wrapping_add(0x9E37_79B9_7F4A_7C15)
//! z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9)
//! z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB)
//! z ^ (z >> 31)
//! ```

use rand_core::{RngCore, SeedableRng};

pub use rand_chacha::ChaCha8Rng as ReplicaRng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Avalanche mix of `(base_seed, replica_index)` into a 64-bit seed.
pub const fn replica_seed(base_seed: u64, replica_index: u64) -> u64 {
    let mut z = base_seed ^ replica_index.wrapping_mul(GOLDEN);
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replica `replica_index` of an experiment seeded with `base_seed`.
pub fn replica_rng(base_seed: u64, replica_index: u64) -> ReplicaRng {
    ReplicaRng::seed_from_u64(replica_seed(base_seed, replica_index))
}

/// A splitmix64 stream, cheap enough to give every fragment its own.
///
/// Fragments are keyed by a genealogical id, so the fate of one fragment
/// does not depend on how many others were simulated before it.
#[derive(Debug, Clone)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }
}

impl RngCore for SplitMix {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(GOLDEN);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}

/// Id of child `index` of the fragment with id `parent`.
#[inline]
pub const fn child_id(parent: u64, index: u64) -> u64 {
    replica_seed(parent, index.wrapping_add(1))
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Exponential waiting time with the given rate (mean `1/rate`).
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -crate::math::ln(uniform_open(rng)) / rate
}
