//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 generators seeded through
//! [`stream`]. A (seed, stream id) pair names an independent, reproducible
//! sequence, so work split across threads draws the same numbers regardless
//! of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DasRng = ChaCha8Rng;

/// Generator for stream `stream_id` of `seed`.
pub fn stream(seed: u64, stream_id: u64) -> DasRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// In-place Fisher–Yates shuffle (Durstenfeld, descending index).
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Derive a child seed from a parent seed and a label; used to give each
/// harness cell and each fitted component its own stream family.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    // splitmix64 finalizer over the combined word
    let mut z = parent ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
