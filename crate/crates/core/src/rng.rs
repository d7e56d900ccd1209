//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a [`SeedStream`] addressed by a
//! path of counters (experiment seed, purpose tag, outer index, inner index).
//! Because each path owns its stream, results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Purpose tags used when splitting a stream.
pub mod tags {
    pub const SUBORDINATOR: u64 = 0x5355_424f;
    pub const BROWNIAN: u64 = 0x4252_4f57;
    pub const MOMENT: u64 = 0x4d4f_4d45;
    pub const START_XI: u64 = 0x5849;
    pub const START_ETA: u64 = 0x4554_41;
    pub const CHECK: u64 = 0x4348_4543;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(splitmix64(seed))
    }

    /// Independent sub-stream number `index`.
    pub fn child(self, index: u64) -> Self {
        SeedStream(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> PathRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for SeedStream {
    fn from(seed: u64) -> Self {
        SeedStream::new(seed)
    }
}
