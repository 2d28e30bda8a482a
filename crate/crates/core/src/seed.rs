//! Seed derivation and counter-keyed noise streams.
//!
//! Every random draw in a simulation is keyed by integers (master seed,
//! machine, round, ...), never by evaluation order, so results do not depend
//! on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of integer keys into a single 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Domain tags so problem data and gradient noise never share a stream.
pub(crate) mod tag {
    pub const PROBLEM: u64 = 0x5052_4f42;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SWEEP: u64 = 0x5357_4545;
}

/// Source of per-(machine, round) gradient-noise streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStreams {
    seed: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        NoiseStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh generator for `machine` (0-based) in round `round` (1-based).
    pub fn stream(&self, machine: usize, round: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(&[
            tag::NOISE,
            self.seed,
            machine as u64,
            round as u64,
        ]))
    }
}
