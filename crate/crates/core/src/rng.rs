//! Seeded, counter-based random streams.
//!
//! Every draw in the toolkit is a pure function of `(seed, stream_id)` and a
//! position in that stream. The backing generator is ChaCha8, whose keystream
//! is addressable by word position, so a block of draws can be read at any
//! offset without replaying the prefix.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const F64_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Distinct stream ids give non-overlapping keystreams; parallel replications
/// use one handle each. A handle is not meant to be shared between threads.
#[derive(Clone, Debug)]
pub struct RngHandle {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh handle on another stream of the same seed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * F64_SCALE
    }

    /// Moves the cursor to the `index`-th 64-bit draw of the stream.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    /// Index of the next 64-bit draw.
    pub fn position(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    /// Fills `out` with the uniforms stored at draw indices `index..index + out.len()`.
    pub fn uniforms_at(&mut self, index: u64, out: &mut [f64]) {
        self.seek(index);
        for slot in out.iter_mut() {
            *slot = self.uniform();
        }
    }
}
