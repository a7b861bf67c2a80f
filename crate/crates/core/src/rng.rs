//! Reproducible random streams.
//!
//! A stream is addressed by `(seed, stream_id)` and backed by ChaCha8, whose
//! 64-bit stream parameter gives independent sequences under a common key.
//! Sub-streams (per replica, per role) are derived by hashing the parent
//! stream id with a tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// Stream roles inside a replica.
pub mod role {
    pub const ENV: u64 = 1;
    pub const WALK: u64 = 2;
    pub const BRANCH: u64 = 3;
    pub const PERPETUITY: u64 = 4;
    pub const TILT: u64 = 5;
    pub const CYCLES: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derived stream for a tagged sub-task (replica index, role, ...).
    pub fn substream(&self, tag: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self { seed: self.seed, stream_id: id }
    }

    pub fn replica(&self, index: u64) -> Self {
        self.substream(index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
