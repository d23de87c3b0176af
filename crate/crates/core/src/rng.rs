//! Seeded random streams.
//!
//! Every generator in the crate is `ChaCha20Rng` (rand_chacha 0.9) keyed by
//! `seed_from_u64(seed)`. Independent substreams for replicates, assets or
//! outer loops are obtained with [`substream`], which keeps the key and
//! selects ChaCha stream number `index`. The stream mapping is a function of
//! `(seed, index)` only, so results do not depend on thread scheduling or
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Primary stream for `seed` (stream 0).
pub fn stream(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Stream `index + 1` under the key derived from `seed`.
///
/// Index 0 of a substream is distinct from the primary stream.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
