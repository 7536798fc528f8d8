//! Seedable, splittable random streams.
//!
//! Every stochastic operation takes an explicit `&mut impl Rng`. Independent
//! workers obtain their own stream with [`derive_rng`], keyed by a root seed
//! and a path of integers (e.g. `[step, sequence, position]`), so results do
//! not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Domain tags used as the first key when splitting streams.
pub mod tag {
    pub const DATA: u64 = 0x_da7a;
    pub const VERIFY: u64 = 0x_5e11;
    pub const INIT: u64 = 0x_1417;
    pub const POOL: u64 = 0x_9001;
    pub const PROBE: u64 = 0x_9b0e;
    pub const SIM: u64 = 0x_51a1;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a key path into a 64-bit child seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Root stream for `seed`.
pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Independent child stream of `seed` addressed by `keys`.
pub fn derive_rng(seed: u64, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, keys))
}
