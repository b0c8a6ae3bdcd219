use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// ChaCha20 generator for `(seed, stream)`. Distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for worker `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream.wrapping_add(1)).next_u64()
}

/// `len` i.i.d. standard normal draws.
pub fn gaussian_vector(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}
