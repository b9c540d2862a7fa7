//! Seeded random sources.
//!
//! Every random draw in the crate comes from [`Rng`], a ChaCha8 stream whose
//! output is identical across platforms. Experiment code never seeds a
//! generator directly from an iteration seed; it goes through [`derive`] so
//! that each consumer (data generation, noise, fitting, ...) reads an
//! independent stream at a fixed offset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams of one iteration seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 0,
    Noise = 1,
    Split = 2,
    Fit = 3,
    Search = 4,
    Shuffle = 5,
}

const STREAM_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed for `stream` under `seed`: a fixed offset, so runs are replayable
/// from the root seed alone.
pub fn derive(seed: u64, stream: Stream) -> u64 {
    seed.wrapping_add((stream as u64).wrapping_mul(STREAM_STRIDE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_eq!(derive(7, Stream::Data), 7);
        assert_ne!(derive(7, Stream::Noise), derive(7, Stream::Fit));
        let a: u64 = seeded(derive(3, Stream::Fit)).random();
        let b: u64 = seeded(derive(3, Stream::Fit)).random();
        assert_eq!(a, b);
    }
}
