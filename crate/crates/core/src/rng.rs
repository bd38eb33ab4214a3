//! Named, independently seeded random streams.
//!
//! Every stochastic subsystem draws from its own stream so that, for example,
//! adding a vaccination window never perturbs the disease draws of agents it
//! does not touch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Population = 1,
    Disease = 2,
    Economy = 3,
    Vaccination = 4,
    Policy = 5,
}

/// Builds the generator for one stream of a seed. Streams share the seed and
/// differ in the ChaCha stream id, so they never overlap.
pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct RngStreams {
    pub population: SimRng,
    pub disease: SimRng,
    pub economy: SimRng,
    pub vaccination: SimRng,
    pub policy: SimRng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            population: stream_rng(seed, Stream::Population),
            disease: stream_rng(seed, Stream::Disease),
            economy: stream_rng(seed, Stream::Economy),
            vaccination: stream_rng(seed, Stream::Vaccination),
            policy: stream_rng(seed, Stream::Policy),
        }
    }
}
