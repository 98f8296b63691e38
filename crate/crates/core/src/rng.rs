//! Seeded, splittable generators.
//!
//! Every trial draws from its own stream, derived from the master seed and a
//! counter, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type TrialRng = Xoshiro256PlusPlus;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for stream `stream` under `master`.
pub fn stream_rng(master: u64, stream: u64) -> TrialRng {
    let mut seed = [0u8; 32];
    let mut state = splitmix64(master) ^ splitmix64(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    TrialRng::from_seed(seed)
}

/// Stream id for trial `trial` at ladder position `point` of experiment `tag`.
pub fn trial_stream(tag: u64, point: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(tag ^ (point << 40)) ^ trial)
}
