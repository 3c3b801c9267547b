//! Per-path random streams.
//!
//! Every path owns a xoshiro256** generator. Its 64-bit seed is
//! `splitmix64_mix(master_seed + 0x9E3779B97F4A7C15 * (path_index + 1))`
//! (wrapping arithmetic), and the generator state is filled from that seed by
//! the SplitMix64 sequence (`Xoshiro256StarStar::seed_from_u64`). Uniforms are
//! `(next_u64 >> 11) * 2^-53`. The stream therefore depends only on
//! `(master_seed, path_index)`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    splitmix64_mix(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(path_index.wrapping_add(1))))
}

pub struct PathRng(Xoshiro256StarStar);

impl PathRng {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        PathRng(Xoshiro256StarStar::seed_from_u64(path_seed(master_seed, path_index)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map({
            let mut r = PathRng::new(42, 0);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = PathRng::new(42, 0);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = PathRng::new(42, 1);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        let mut state = 0u64;
        let mut next = || {
            state = state.wrapping_add(GOLDEN_GAMMA);
            splitmix64_mix(state)
        };
        assert_eq!(next(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(next(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = PathRng::new(7, 3);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
