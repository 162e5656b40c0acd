//! Seeded random streams.
//!
//! Every trial owns an independent ChaCha8 stream selected by
//! `(master seed, purpose, index)`, so results never depend on how trials
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// Purpose tags keep the streams used by different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Trial = 1,
    Tuning = 2,
    Evaluation = 3,
    Alpha = 4,
    DeltaCalibration = 5,
    Percentile = 6,
    CostStudy = 7,
    CostTuning = 8,
    Verification = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> RandomStream {
    let key = splitmix64(master_seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
