//! Seeded substreams: every (purpose, index) pair gets its own ChaCha stream so
//! generation is reproducible regardless of evaluation order or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub const LATENT: u64 = 0x6c61_7465_6e74;
pub const SURROGATE: u64 = 0x7375_7272;
pub const COVARIATE: u64 = 0x63_6f76_6172;
pub const OUTCOME: u64 = 0x6f75_7463;
pub const BOOTSTRAP: u64 = 0x626f_6f74;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose)));
    rng.set_stream(index);
    rng
}

/// Seed of Monte Carlo replicate `r` under a master seed.
pub fn replicate_seed(master: u64, r: u64) -> u64 {
    splitmix64(master ^ splitmix64(r.wrapping_add(0x5eed)))
}
