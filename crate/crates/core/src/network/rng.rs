//! Reproducible factor generation.
//!
//! The stream is ChaCha8 (the `rand_chacha` 0.3 implementation) keyed with
//! `seed_from_u64(seed)`. Each draw takes the top 53 bits of one `next_u64`
//! word, giving `u ∈ [0, 1)`, and maps it to `2u − 1 ∈ [−1, 1)`. ChaCha is a
//! counter-mode generator, so the sequence is identical on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct UniformSource {
    rng: ChaCha8Rng,
}

impl UniformSource {
    pub fn new(seed: u64) -> Self {
        UniformSource { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[−1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }

    pub fn fill(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_symmetric()).collect()
    }
}
