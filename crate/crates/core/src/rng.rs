//! Deterministic random streams.
//!
//! Every generator in the crate is a ChaCha20 stream keyed by a 64-bit seed
//! (expanded with `SeedableRng::seed_from_u64`) and selected by a 64-bit
//! stream index. ChaCha output is platform-independent, so equal
//! `(seed, stream)` pairs reproduce identical draws everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Stream index constants so that independent consumers of one seed never
/// share draws.
pub mod stream {
    pub const VOLUMES: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const PARAM_DESIGN: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const FOLDS: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and an index (SplitMix64 finalizer).
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
