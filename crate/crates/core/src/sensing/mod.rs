//! Sequential sensing strategies and the bookkeeping that tracks the gap
//! between the covariance the algorithm believes and the true one.
//!
//! Every run keeps two conditional covariances side by side: the assumed
//! `Σ̂_k`, which drives measurement design, and the true `Σ_k`, obtained by
//! applying the very same measurement vectors to the generating covariance.
//! Their difference `E_k = Σ̂_k − Σ_k` and its spectral norm `δ_k` are stored
//! per step together with traces, ranks and log-volume entropies.

mod engine;
mod policies;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{chi2_quantile, eig_sym, SymMatrix, DEFAULT_RANK_TOL};

pub use policies::{
    nominal_schedule, run_batch, run_batch_with_signal, run_info_greedy, run_info_greedy_with_signal, run_random,
    run_random_with_signal,
};

/// An eigenvalue within this much of the stopping threshold counts as reached.
pub const STOP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerPolicy {
    /// `β = (χ²_n(p)/ε² − 1/λ) σ²`: drive the measured eigenvalue to `ε²/χ²_n(p)`.
    Nominal,
    /// `β = max{0, σ² (1/(ε²/χ²_n(p) − δ_s) − 1/λ)}`: aim below the threshold by
    /// `delta_s` so that a mismatch of that size is absorbed.
    Robust { delta_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub sigma2: f64,
    pub epsilon: f64,
    pub p: f64,
    /// Defaults to the signal dimension.
    #[serde(default)]
    pub max_steps: Option<usize>,
    pub power_policy: PowerPolicy,
    pub rank_tol: f64,
    /// Keep dense `Σ̂_k` and `Σ_k` for every step in [`SensingTrace::snapshots`].
    #[serde(default)]
    pub record_covariances: bool,
}

impl SensingConfig {
    pub fn new(sigma2: f64, epsilon: f64, p: f64) -> Result<Self> {
        let cfg = Self {
            sigma2,
            epsilon,
            p,
            max_steps: None,
            power_policy: PowerPolicy::Nominal,
            rank_tol: DEFAULT_RANK_TOL,
            record_covariances: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_policy(mut self, policy: PowerPolicy) -> Self {
        self.power_policy = policy;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_covariances = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sigma2) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !positive(self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !positive(self.rank_tol) {
            return Err(Error::invalid("rank_tol must be positive"));
        }
        if let PowerPolicy::Robust { delta_s } = self.power_policy {
            if !(delta_s >= 0.0 && delta_s.is_finite()) {
                return Err(Error::invalid("robust delta_s must be non-negative"));
            }
        }
        Ok(())
    }

    /// Resolves the χ² quantile for an `n`-dimensional signal.
    pub fn thresholds(&self, n: usize) -> Result<Thresholds> {
        self.validate()?;
        let chi2 = chi2_quantile(n, self.p)?;
        let stop = self.epsilon * self.epsilon / chi2;
        let target = match self.power_policy {
            PowerPolicy::Nominal => stop,
            PowerPolicy::Robust { delta_s } => stop - delta_s,
        };
        if target <= 0.0 {
            return Err(Error::invalid(format!(
                "robust delta_s must stay below ε²/χ²_n(p) = {stop:e}"
            )));
        }
        Ok(Thresholds {
            chi2,
            stop,
            target,
            epsilon2: self.epsilon * self.epsilon,
            sigma2: self.sigma2,
            policy: self.power_policy,
        })
    }
}

/// Numbers derived from a [`SensingConfig`] for one signal dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// `χ²_n(p)`
    pub chi2: f64,
    /// `ε²/χ²_n(p)`
    pub stop: f64,
    /// Eigenvalue a measured direction is driven to; equals `stop` for the
    /// nominal policy.
    pub target: f64,
    epsilon2: f64,
    sigma2: f64,
    policy: PowerPolicy,
}

impl Thresholds {
    /// Power assigned to a direction whose assumed eigenvalue is `lambda`.
    pub fn power(&self, lambda: f64) -> f64 {
        match self.policy {
            PowerPolicy::Nominal => (self.chi2 / self.epsilon2 - 1.0 / lambda) * self.sigma2,
            PowerPolicy::Robust { .. } => (self.sigma2 * (1.0 / self.target - 1.0 / lambda)).max(0.0),
        }
    }

    /// True once the largest assumed eigenvalue needs no further measurement.
    pub fn reached(&self, lambda: f64) -> bool {
        lambda <= self.target + STOP_SLACK
    }
}

/// Output of [`design_measurement`]: measure `a = √β u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub direction: DVector<f64>,
    pub beta: f64,
    pub lambda: f64,
}

impl Design {
    pub fn vector(&self) -> DVector<f64> {
        &self.direction * self.beta.max(0.0).sqrt()
    }
}

/// Top eigenpair of `gamma` and the power the configured policy assigns to it.
/// The nominal power is returned as computed, so it is negative when `λ` is
/// already below `ε²/χ²_n(p)`.
pub fn design_measurement(gamma: &SymMatrix, cfg: &SensingConfig) -> Result<Design> {
    let thr = cfg.thresholds(gamma.dim())?;
    let eig = eig_sym(gamma)?;
    let (lambda, direction) = eig
        .top()
        .ok_or_else(|| Error::invalid("cannot design a measurement in zero dimensions"))?;
    if lambda <= 0.0 {
        return Err(Error::NothingToMeasure(lambda));
    }
    Ok(Design {
        beta: thr.power(lambda),
        direction,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    InfoGreedy,
    Batch,
    Random,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::InfoGreedy => "info_greedy",
            PolicyKind::Batch => "batch",
            PolicyKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Largest assumed eigenvalue fell to the target.
    Converged,
    MaxSteps,
    /// The nominal power came out non-positive while the stopping rule had
    /// not fired; only reachable through round-off.
    NonPositivePower,
    /// A fixed-length strategy used up its measurements.
    Budget,
}

/// One measurement `y_k = a_kᵀ x + w_k` with `a_k = √β_k u_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub step: usize,
    /// Unit vector `u_k`. Dropped from compact serialisations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub direction: Vec<f64>,
    pub beta: f64,
    pub y: f64,
    /// Assumed eigenvalue along `u_k` when it was chosen.
    pub lambda_hat: f64,
}

impl MeasurementRecord {
    pub fn a(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.direction) * self.beta.sqrt()
    }
}

/// State after measurement `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub measurement: MeasurementRecord,
    /// `‖Σ̂_k − Σ_k‖`
    pub delta: f64,
    pub trace_assumed: f64,
    pub trace_truth: f64,
    /// `‖Σ̂_k‖`
    pub norm_assumed: f64,
    /// `‖Σ_k‖`
    pub norm_truth: f64,
    pub rank_assumed: usize,
    pub rank_truth: usize,
    #[serde(with = "neg_inf_as_null")]
    pub entropy_assumed: f64,
    #[serde(with = "neg_inf_as_null")]
    pub entropy_truth: f64,
    /// `‖θ_k − x‖`
    pub error: f64,
}

/// Quantities fixed for the whole run, plus the `k = 0` state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceContext {
    pub n: usize,
    /// Rank of the true covariance.
    pub s: usize,
    pub sigma2: f64,
    pub epsilon: f64,
    pub p: f64,
    pub chi2: f64,
    /// `ε²/χ²_n(p)`
    pub threshold: f64,
    pub target: f64,
    pub power_policy: PowerPolicy,
    /// `‖Σ̂ − Σ‖`
    pub delta0: f64,
    pub trace_assumed0: f64,
    pub trace_truth0: f64,
    pub norm_assumed0: f64,
    pub norm_truth0: f64,
    pub rank_assumed0: usize,
    pub rank_truth0: usize,
    #[serde(with = "neg_inf_as_null")]
    pub entropy_assumed0: f64,
    #[serde(with = "neg_inf_as_null")]
    pub entropy_truth0: f64,
    pub error0: f64,
}

/// Dense covariances after step `k` (index 0 is the prior).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSnapshot {
    pub assumed: SymMatrix,
    pub truth: SymMatrix,
}

impl CovarianceSnapshot {
    /// `E_k = Σ̂_k − Σ_k`
    pub fn mismatch(&self) -> SymMatrix {
        self.assumed.sub(&self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingTrace {
    pub policy: PolicyKind,
    pub context: TraceContext,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimate: Vec<f64>,
    /// `‖x̂ − x‖`
    pub error: f64,
    pub signal_norm: f64,
    pub stop: StopReason,
    #[serde(skip)]
    pub snapshots: Vec<CovarianceSnapshot>,
}

impl SensingTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        total_power(self)
    }

    pub fn delta_final(&self) -> f64 {
        self.steps.last().map_or(self.context.delta0, |s| s.delta)
    }

    /// `δ_0, δ_1, …, δ_K`
    pub fn deltas(&self) -> Vec<f64> {
        std::iter::once(self.context.delta0)
            .chain(self.steps.iter().map(|s| s.delta))
            .collect()
    }

    /// `‖θ_k − x‖` for `k = 0..=K`.
    pub fn errors(&self) -> Vec<f64> {
        std::iter::once(self.context.error0)
            .chain(self.steps.iter().map(|s| s.error))
            .collect()
    }

    pub fn normalized_error(&self) -> f64 {
        if self.signal_norm > 0.0 {
            self.error / self.signal_norm
        } else {
            0.0
        }
    }

    /// Measurement matrix with one row `a_kᵀ` per step; needs directions.
    pub fn measurement_matrix(&self) -> DMatrix<f64> {
        let n = self.context.n;
        let mut m = DMatrix::zeros(self.len(), n);
        for (k, step) in self.steps.iter().enumerate() {
            if !step.measurement.direction.is_empty() {
                m.row_mut(k).copy_from(&step.measurement.a().transpose());
            }
        }
        m
    }

    /// Copy without per-step direction vectors, signal or estimate: what the
    /// harness writes to disk.
    pub fn compact(&self) -> SensingTrace {
        let mut t = self.clone();
        t.signal.clear();
        t.estimate.clear();
        t.snapshots.clear();
        for s in &mut t.steps {
            s.measurement.direction.clear();
        }
        t
    }
}

/// Sum of the per-step powers `β_k`.
pub fn total_power(trace: &SensingTrace) -> f64 {
    trace.steps.iter().map(|s| s.measurement.beta).sum()
}

/// JSON has no infinities; an empty-support entropy is written as `null`.
mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
