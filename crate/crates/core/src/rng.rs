//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream, addressed by the
//! master seed plus a short path of integers (chain index, replicate, purpose
//! tag, ...). Streams never depend on scheduling, so results are identical
//! whether work runs on one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags used as the last element of a stream path.
pub mod tag {
    pub const CHAIN: u64 = 0x01;
    pub const COVARIATES: u64 = 0x02;
    pub const NOISE: u64 = 0x03;
    pub const TEST_SET: u64 = 0x04;
    pub const REFIT: u64 = 0x05;
    pub const PRIOR: u64 = 0x06;
    pub const UNIFORMITY: u64 = 0x07;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let id = path
        .iter()
        .fold(0x6A09_E667_F3BC_C908_u64, |acc, &p| splitmix64(acc ^ p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
