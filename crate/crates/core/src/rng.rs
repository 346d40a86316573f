//! Named, counter-derived random substreams.
//!
//! Every random quantity is drawn from a ChaCha stream whose seed is a hash
//! of the user seed and a tuple of integer tags, so results do not depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Tag for scenario noise; combine with (replicate, curve).
pub const TAG_NOISE: u64 = 0x6e6f_6973;
/// Tag for credible-band draws; combine with (curve, draw).
pub const TAG_BAND: u64 = 0x6261_6e64;
/// Tag for Gibbs chains; combine with the chain index.
pub const TAG_CHAIN: u64 = 0x6368_6169;
/// Tag for per-replicate seeds.
pub const TAG_REPLICATE: u64 = 0x7265_706c;
/// Tag for input jitter.
pub const TAG_JITTER: u64 = 0x6a69_7474;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn substream(seed: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
