//! Seeded random streams.
//!
//! Every stochastic work item (a sampler chain, a shell draw) owns a ChaCha
//! stream derived from `(master seed, purpose, index)`, so an ensemble gives
//! identical numbers no matter how the items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; distinct purposes never share numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Thermal sampling (classical Metropolis and ring-polymer Langevin chains).
    Thermal = 0x7468_6572,
    /// Microcanonical shell draws.
    Shell = 0x7368_656c,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((purpose as u64) << 16));
    rng.set_stream(index);
    rng
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut StreamRng) -> f64 {
    use rand::Rng;
    rng.random::<f64>()
}
