//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! the trial seed, so changing how one component consumes randomness leaves
//! the draws of every other component untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    World = 1,
    Motion = 2,
    Sensor = 3,
    Policy = 4,
    Dropout = 5,
    Replay = 6,
    Init = 7,
    Layer = 8,
}

/// Independent generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Generator for a sub-index of a stream, e.g. one per minibatch sample.
pub fn substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(stream as u64);
    rng
}

/// Zero-mean Gaussian sample with standard deviation `sd`, truncated at ±4 sd
/// by rejection. Returns exactly 0 when `sd == 0` without consuming draws.
pub fn truncated_gaussian<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 4.0 {
            return z * sd;
        }
    }
}
