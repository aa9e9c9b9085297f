//! Counter-based random streams.
//!
//! One ChaCha8 key per master seed. A draw is addressed by
//! `(replication, lane, step, slot)`: the 64-bit ChaCha stream id packs the
//! replication (high 24 bits) and the lane (low 40 bits), and the word
//! position encodes `(step, slot)`. Lane `i` is agent `i`; the last lane is
//! the common noise. Nothing depends on how many agents exist or on the order
//! in which lanes are visited, so results are identical across `N` (common
//! random numbers) and across worker counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform draws per agent per step: idiosyncratic noise, then randomizer.
pub const SLOTS_PER_STEP: u64 = 2;

pub const COMMON_LANE: u64 = (1 << 40) - 1;

const MAX_REPLICATIONS: u64 = 1 << 24;

#[derive(Clone, Debug)]
pub struct Streams {
    seed: u64,
}

/// Purpose tags keep independent experiments on disjoint keys.
#[derive(Clone, Copy, Debug)]
pub enum Purpose {
    Dynamics = 1,
    Sampling = 2,
}

impl Streams {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        // splitmix64 finalizer to decorrelate nearby seeds and purposes
        let mut z = seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Streams { seed: z ^ (z >> 31) }
    }

    /// Generator positioned at `(replication, lane, step)`; successive
    /// `gen::<f64>()` calls read slots 0, 1, ...
    pub fn at(&self, replication: u64, lane: u64, step: u64) -> ChaCha8Rng {
        assert!(replication < MAX_REPLICATIONS && lane <= COMMON_LANE, "stream address out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((replication << 40) | lane);
        // each f64 consumes two 32-bit words
        rng.set_word_pos(u128::from(step) * u128::from(SLOTS_PER_STEP) * 2);
        rng
    }

    /// A lane read sequentially from its start (for i.i.d. sampling).
    pub fn lane(&self, replication: u64, lane: u64) -> ChaCha8Rng {
        self.at(replication, lane, 0)
    }
}

/// Uniform on `(0, 1]`, so that quantile sampling never returns a
/// zero-mass point.
pub fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}
