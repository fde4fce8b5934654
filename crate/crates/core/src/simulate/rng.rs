//! Seed derivation for order-independent random streams.
//!
//! Every stream is a ChaCha8 generator (a counter-based construction) keyed
//! by a 64-bit seed. Child seeds are derived by hashing `(parent, index)`, so
//! the draws of replicate `r`, day `t` do not depend on which worker runs
//! them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation streams.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `hash(parent, index)`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Stream keyed by `seed`.
pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for child `index` of `parent`.
pub fn substream(parent: u64, index: u64) -> StreamRng {
    stream(derive_seed(parent, index))
}
