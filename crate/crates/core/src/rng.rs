//! Seeded randomness.
//!
//! Every randomized step draws from [`Rng`], a ChaCha8 stream generator
//! seeded from a 64-bit integer. Independent streams (one per image, per
//! codebook, per repeat) are selected with [`stream`] so results do not
//! depend on thread scheduling.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform index in `0..n`. `n` must be positive.
pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

/// Fisher-Yates shuffle drawing 64-bit ranges, so the permutation is the
/// same on 32- and 64-bit targets.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

pub fn unit_f64(rng: &mut Rng) -> f64 {
    rng.gen::<f64>()
}
