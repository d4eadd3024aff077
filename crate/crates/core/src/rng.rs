//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by the
//! caller's seed and a fixed stream id, so independent consumers of the same
//! seed (weight init, batch shuffling, dropout masks, reparameterisation
//! noise) never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const VI_NOISE: u64 = 4;
    pub const SAMPLE: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const DRIFT: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-index into a seed (splitmix64 finaliser).
pub fn derive(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
