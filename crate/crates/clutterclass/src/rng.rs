//! Deterministic RNG substream derivation.
//!
//! Every stochastic consumer in the crate draws from a [`ChaCha8Rng`] whose
//! seed is derived from a `(master seed, purpose tag, index)` triple. Results
//! are therefore reproducible regardless of evaluation order or thread
//! scheduling: two consumers never share a stream, and the same triple always
//! yields the same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a substream seed from a master seed, a purpose tag, and an index.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for byte in tag.bytes() {
        h = splitmix64(h ^ u64::from(byte));
    }
    splitmix64(h ^ index)
}

/// A seeded generator for the substream identified by `(master, tag, index)`.
pub fn substream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
