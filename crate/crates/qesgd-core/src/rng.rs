//! Deterministic, streamed randomness.
//!
//! Everything stochastic in this crate draws from a [`RandomSource`]: a
//! ChaCha8 generator addressed by `(seed, stream)`. The same pair yields the
//! same uniform sequence on every platform and every run, which is what makes
//! optimizer trajectories and the parameter-server simulation replayable.
//!
//! Distinct concerns use distinct stream ids so that consuming randomness for
//! one purpose never shifts another (e.g. quantization draws do not perturb
//! sample-index draws):
//!
//! - [`STREAM_SAMPLING`] — training-sample index draws
//! - [`STREAM_QUANT`] — stochastic rounding draws
//! - [`STREAM_DATAGEN`] — synthetic dataset generation

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream id for sample-index draws inside optimizer runs.
pub const STREAM_SAMPLING: u64 = 0;
/// Stream id for stochastic-rounding draws.
pub const STREAM_QUANT: u64 = 1;
/// Stream id for synthetic data generation.
pub const STREAM_DATAGEN: u64 = 2;

/// A seeded, streamed uniform generator.
///
/// Cloning captures the full generator state, so a clone replays the exact
/// remaining sequence. A `RandomSource` is single-owner: concurrent users
/// must hold sources with distinct stream ids.
#[derive(Clone, Debug)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
    spare_gaussian: Option<f64>,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            seed,
            stream,
            spare_gaussian: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    ///
    /// Consumes exactly one 64-bit word of generator output.
    pub fn next_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.rng.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform index in `[0, n)`.
    ///
    /// Uses a 64-bit draw reduced modulo `n`; the bias is at most `n / 2^64`,
    /// far below anything observable here, and the fixed consumption pattern
    /// (one word per index) keeps replay simple.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index needs a nonempty range");
        (self.rng.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Draws two uniforms per pair and caches the second value, so consumption
    /// alternates between two words and zero words.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = crate::math::sqrt(-2.0 * crate::math::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * crate::math::sin(theta));
        r * crate::math::cos(theta)
    }
}
