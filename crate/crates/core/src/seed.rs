//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of one campaign seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Workload = 1,
    OsAccesses = 2,
    Injection = 3,
    Manifestation = 4,
    SecondController = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index into a new seed.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(stream as u64)) ^ index)
}

pub fn rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
