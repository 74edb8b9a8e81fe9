//! Seeded random streams.
//!
//! The generator is ChaCha8. A `(seed, stream)` pair names one stream: the key
//! is expanded from `seed` with `SeedableRng::seed_from_u64`, and `stream` is
//! the ChaCha stream id, so distinct stream ids never overlap for a given seed.
//!
//! Simulation sub-streams use ids `2k` (interarrivals of class `k`) and
//! `2k + 1` (service requirements of class `k`). Replication `r` of a run with
//! base seed `s` uses seed [`replication_seed`]`(s, r)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn arrivals(seed: u64, class: usize) -> Self {
        Self::new(seed, 2 * class as u64)
    }

    pub fn services(seed: u64, class: usize) -> Self {
        Self::new(seed, 2 * class as u64 + 1)
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Seed of replication `rep` (0-based): SplitMix64 finalizer of `base + rep`.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    let mut z = base.wrapping_add(rep.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
