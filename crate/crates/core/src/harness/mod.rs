//! Seeded Monte Carlo experiments over sensing policies and mismatch models.

mod config;
mod experiment;
mod seeds;

pub use config::{ExperimentConfig, MismatchModel, PolicySpec, Spectrum, SCHEMA_VERSION};
pub use experiment::{
    error_curves, run_experiment, run_trial, simulate, summarize, trial_results, write_results_csv, ErrorCurve,
    ExperimentOutput, ExperimentSummary, PolicySummary, SketchDiagnostics, Stats, TrialOutcome, TrialResult,
    TrialSetup, RESULTS_HEADER,
};
pub use seeds::{trial_rng, TrialStreams};
