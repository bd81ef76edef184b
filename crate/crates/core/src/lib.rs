//! Info-Greedy Sensing for low-rank Gaussian signals.
//!
//! The crate measures a signal `x ~ N(0, Σ)` one linear projection at a time,
//! always along the top eigenvector of the current posterior covariance, and
//! tracks what happens when the covariance the algorithm believes (`Σ̂`) is not
//! the one that generated the data (`Σ`).
//!
//! Modules, bottom up:
//!
//! - [`numlin`]: symmetric matrices, Jacobi eigendecomposition, chi-squared quantiles.
//! - [`gaussian`]: Gaussian models, sampling, posterior updates, log-volume entropy.
//! - [`sensing`]: Info-Greedy, batch and random sensing with mismatch bookkeeping.
//! - [`analysis`]: closed-form entropy / power / sample-size bounds and checkers.
//! - [`sketch`]: quadratic covariance sketches and trace-minimisation recovery.
//! - [`harness`]: seeded Monte Carlo experiments and result files.
//! - [`cli`]: the `infogreedy` command line front end.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod numlin;
pub mod sensing;
pub mod sketch;

pub use error::{Error, Result};
pub use gaussian::{GaussianBelief, GaussianModel};
pub use numlin::{EigenDecomposition, SymMatrix};
pub use sensing::{PowerPolicy, SensingConfig, SensingTrace};

/// Deterministic generator used throughout the crate. ChaCha supports 2^64
/// independent streams per seed, which the harness uses for per-trial streams.
pub type SeededRng = rand_chacha::ChaCha20Rng;
