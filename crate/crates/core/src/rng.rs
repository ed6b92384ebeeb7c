//! Counter-based random streams.
//!
//! Every random draw in the engine comes from a stream addressed by
//! `(seed, purpose, env_id, counter)`. The key selects a ChaCha8 key and the
//! counter selects the ChaCha stream id, so a stream can be materialized at any
//! point without replaying earlier draws. Partitioning the environment batch
//! across workers therefore never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Reset = 1,
    Goal = 2,
    Episode = 3,
    ObsNoise = 4,
    ActionNoise = 5,
    Force = 6,
    Policy = 7,
    Shuffle = 8,
    Init = 9,
    Eval = 10,
    Camera = 11,
}

/// Build the generator for one `(seed, purpose, env_id, counter)` address.
pub fn stream(seed: u64, purpose: Purpose, env_id: u64, counter: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&env_id.to_le_bytes());
    key[24..32].copy_from_slice(b"reposer\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter);
    rng
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// SplitMix64 finalizer, used to derive sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
