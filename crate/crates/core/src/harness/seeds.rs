//! Per-trial random streams. Trial `t` reads ChaCha20 stream `t` under the
//! master seed, so its draws never depend on how many trials run or in which
//! order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Independent generators for one trial, one per purpose.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    /// Spectrum and eigenbasis of `Σ`.
    pub model: ChaCha20Rng,
    /// Perturbation, samples or sketches behind `Σ̂`.
    pub mismatch: ChaCha20Rng,
    pub signal: ChaCha20Rng,
    /// Measurement noise; every policy starts from a copy.
    pub noise: ChaCha20Rng,
    /// Directions of the random baseline.
    pub directions: ChaCha20Rng,
}

pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

impl TrialStreams {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        let mut root = trial_rng(master_seed, trial);
        let mut child = || ChaCha20Rng::seed_from_u64(root.random());
        Self {
            model: child(),
            mismatch: child(),
            signal: child(),
            noise: child(),
            directions: child(),
        }
    }
}
