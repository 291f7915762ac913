//! Counter-keyed random numbers.
//!
//! Every random value in the crate is a pure function of a 64-bit key and a
//! counter, so realizations do not depend on evaluation order, thread count or
//! on which sub-box a site is read through. The mixing function is the
//! SplitMix64 finalizer applied to a Weyl sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seed that derives child seeds and per-site uniforms without state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed ^ 0x6a09_e667_f3bc_c908) }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child generator for a labelled stream (replicate index, system size, ...).
    pub fn derive(&self, stream: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))),
        }
    }

    /// Child generator for a textual label.
    pub fn derive_label(&self, label: &str) -> Self {
        let h = label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
        self.derive(h)
    }

    /// Raw 64-bit output for `counter`.
    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1) keyed by a lattice coordinate.
    #[inline]
    pub fn site_uniform(&self, coords: &[i64]) -> f64 {
        let mut h = self.key;
        for &c in coords {
            h = mix64(h ^ (c as u64).wrapping_mul(GOLDEN_GAMMA));
        }
        ((mix64(h) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Sequential generator seeded from this key, for draws that have no
    /// natural counter (synthetic Poisson samples and the like).
    pub fn sequential(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
