//! Positional random streams.
//!
//! Every random draw inside a sweep comes from a stream keyed by
//! `(seed, iteration, phase, index)`, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream namespaces, one per kind of update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 1,
    Z,
    W,
    OmegaY,
    OmegaZ,
    OmegaG,
    Alpha,
    Beta,
    Theta,
    G,
    Gamma,
    Subsample,
    Data,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Key for `(seed, iteration, phase, index)`.
pub fn stream_key(seed: u64, iter: u64, phase: Phase, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ iter);
    h = splitmix64(h ^ phase as u64);
    splitmix64(h ^ index)
}

pub fn stream(seed: u64, iter: u64, phase: Phase, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, iter, phase, index))
}
