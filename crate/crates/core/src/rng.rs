//! Named, independent random streams derived from one run seed.
//!
//! Each stochastic feature draws from its own ChaCha stream so switching one
//! feature on or off (say, the conservative censor's coin flips) leaves every
//! other draw sequence untouched.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type RunRng = ChaCha12Rng;

/// The per-run random streams, all seeded from the config seed.
#[derive(Clone, Debug)]
pub struct RngStreams {
    /// Arrival coin flips and location sampling.
    pub population: RunRng,
    /// Preference-list tie breaking inside the distributor.
    pub tie_break: RunRng,
    /// Censor randomness: conservative coin flips, fallback agent placement.
    pub censor: RunRng,
    /// Draws of the uniform-random baseline distributor.
    pub baseline: RunRng,
}

impl RngStreams {
    pub fn from_seed(seed: u64) -> Self {
        let mk = |stream: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            rng
        };
        RngStreams {
            population: mk(1),
            tie_break: mk(2),
            censor: mk(3),
            baseline: mk(4),
        }
    }
}
