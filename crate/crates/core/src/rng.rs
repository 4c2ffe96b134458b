//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`]. Independent
//! streams are obtained in two ways:
//!
//! * [`stream`] selects one of the 2^64 ChaCha streams for a fixed seed. This
//!   is used for per-row work (masking a row, generating a row) so that the
//!   result for row `i` does not depend on the order rows are processed in.
//! * [`derive_seed`] mixes a master seed with an index through SplitMix64.
//!   This is used for per-replication and per-method seeds in the harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `id` of the generator seeded with `seed`.
pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
