//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `&mut impl Rng`. Independent units of
//! work (chains, test points, experiment rows) get their own stream, derived from a
//! master seed with [`derive_seed`]:
//!
//! ```text
//! seed(master, stream) = splitmix64(master XOR splitmix64(stream))
//! ```
//!
//! The inner mix keeps neighbouring `(master, stream)` pairs from colliding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type BpmRng = ChaCha8Rng;

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn rng_from_seed(seed: u64) -> BpmRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, stream: u64) -> BpmRng {
    rng_from_seed(derive_seed(master, stream))
}
