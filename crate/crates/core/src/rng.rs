//! Seed handling. Every stochastic routine takes a `u64` seed and derives
//! independent streams for disjoint work ranges with [`sub_seed`], so results
//! do not depend on how the work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splitting rule `(seed, range_start) -> sub-seed`.
pub fn sub_seed(seed: u64, range_start: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ range_start.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream for the work range starting at `range_start`.
pub fn rng_for_range(seed: u64, range_start: u64) -> Rng {
    Rng::seed_from_u64(sub_seed(seed, range_start))
}
