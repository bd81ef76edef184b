use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::DEFAULT_RANK_TOL;
use crate::sensing::{PowerPolicy, SensingConfig};
use crate::sketch::{SketchConstants, SolverOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Eigenvalues of the true covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Spectrum {
    /// Exactly these `s` positive values.
    Explicit { values: Vec<f64> },
    /// `first · ratio^i` for `i < s`.
    Geometric { first: f64, ratio: f64 },
    /// `round(fraction · n)` values drawn uniformly on `[low, high]` per trial
    /// and sorted descending.
    Fraction { fraction: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MismatchModel {
    /// `Σ̂ = Σ`.
    None,
    /// `Σ̂ = Σ + scale · e eᵀ` with `e ~ N(0, I)`.
    RankOnePerturb { scale: f64 },
    /// `Σ̂` is the sample covariance of `samples` draws.
    SampleCov { samples: usize },
    /// `Σ̂` recovered from quadratic sketches. `tau` defaults to `M σ²/L`,
    /// the expected noise energy.
    Sketch {
        m: usize,
        n_samples: usize,
        l: usize,
        sigma2: f64,
        #[serde(default)]
        tau: Option<f64>,
        #[serde(default)]
        solver: Option<SolverOptions>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    InfoGreedy,
    Batch { k: usize },
    Random { k: usize },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::InfoGreedy => "info_greedy",
            PolicySpec::Batch { .. } => "batch",
            PolicySpec::Random { .. } => "random",
        }
    }
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_true() -> bool {
    true
}

fn default_zeta() -> f64 {
    crate::analysis::DEFAULT_ZETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n: usize,
    pub s: usize,
    pub eigen_spectrum: Spectrum,
    pub mismatch: MismatchModel,
    pub policies: Vec<PolicySpec>,
    pub sigma2: f64,
    pub epsilon: f64,
    pub p: f64,
    #[serde(default = "nominal")]
    pub power_policy: PowerPolicy,
    /// Info-Greedy step cap; defaults to `n`.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub write_traces: bool,
    /// Constant of the entropy bound, used by `bounds`.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub sketch_constants: Option<SketchConstants>,
}

fn nominal() -> PowerPolicy {
    PowerPolicy::Nominal
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(&shown, format!("cannot read config: {e}")))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::config(&shown, format!("invalid JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sensing(&self) -> Result<SensingConfig> {
        let cfg = SensingConfig {
            sigma2: self.sigma2,
            epsilon: self.epsilon,
            p: self.p,
            max_steps: self.max_steps,
            power_policy: self.power_policy,
            rank_tol: self.rank_tol,
            record_covariances: false,
        };
        cfg.thresholds(self.n)
            .map_err(|e| Error::config("sensing", e.to_string()))?;
        Ok(cfg)
    }

    /// Checks every field, reporting the first problem with its path.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::config(path, msg));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if self.n == 0 {
            return bad("n", "must be positive".into());
        }
        if self.s > self.n {
            return bad("s", format!("rank {} exceeds dimension {}", self.s, self.n));
        }
        if self.trials == 0 {
            return bad("trials", "at least one trial is required".into());
        }
        if self.workers == Some(0) {
            return bad("workers", "must be positive".into());
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad("zeta", format!("must lie in (0, 1), got {}", self.zeta));
        }
        match &self.eigen_spectrum {
            Spectrum::Explicit { values } => {
                if values.len() != self.s {
                    return bad(
                        "eigen_spectrum.values",
                        format!("{} values given for rank {}", values.len(), self.s),
                    );
                }
                if let Some(i) = values.iter().position(|v| !positive(*v)) {
                    return bad(&format!("eigen_spectrum.values[{i}]"), "must be positive".into());
                }
            }
            Spectrum::Geometric { first, ratio } => {
                if !positive(*first) {
                    return bad("eigen_spectrum.first", "must be positive".into());
                }
                if !(positive(*ratio) && *ratio <= 1.0) {
                    return bad("eigen_spectrum.ratio", "must lie in (0, 1]".into());
                }
            }
            Spectrum::Fraction { fraction, low, high } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return bad("eigen_spectrum.fraction", "must lie in (0, 1]".into());
                }
                let implied = (fraction * self.n as f64).round() as usize;
                if implied != self.s {
                    return bad(
                        "s",
                        format!(
                            "fraction {fraction} of n = {} gives rank {implied}, not {}",
                            self.n, self.s
                        ),
                    );
                }
                if !(positive(*low) && low <= high && high.is_finite()) {
                    return bad("eigen_spectrum.low", "need 0 < low ≤ high".into());
                }
            }
        }
        match &self.mismatch {
            MismatchModel::None => {}
            MismatchModel::RankOnePerturb { scale } => {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return bad("mismatch.scale", "must be non-negative".into());
                }
            }
            MismatchModel::SampleCov { samples } => {
                if *samples == 0 {
                    return bad("mismatch.samples", "must be positive".into());
                }
            }
            MismatchModel::Sketch {
                m,
                n_samples,
                l,
                sigma2,
                tau,
                ..
            } => {
                for (name, v) in [("m", *m), ("n_samples", *n_samples), ("l", *l)] {
                    if v == 0 {
                        return bad(&format!("mismatch.{name}"), "must be positive".into());
                    }
                }
                if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                    return bad("mismatch.sigma2", "must be non-negative".into());
                }
                if let Some(t) = tau {
                    if !(*t >= 0.0 && t.is_finite()) {
                        return bad("mismatch.tau", "must be non-negative".into());
                    }
                }
            }
        }
        if self.policies.is_empty() {
            return bad("policies", "at least one policy is required".into());
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|q| q.name() == p.name()) {
                return bad(&format!("policies[{i}]"), format!("duplicate policy {}", p.name()));
            }
        }
        SensingConfig {
            sigma2: self.sigma2,
            epsilon: self.epsilon,
            p: self.p,
            max_steps: self.max_steps,
            power_policy: self.power_policy,
            rank_tol: self.rank_tol,
            record_covariances: false,
        }
        .thresholds(self.n)
        .map_err(|e| Error::config("sensing", e.to_string()))?;
        Ok(())
    }

    /// Info-Greedy vs batch vs random comparison under a rank-one
    /// perturbation of the assumed covariance.
    pub fn rank_one_comparison(n: usize, measurements: usize, trials: usize, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n,
            s: (0.05 * n as f64).round() as usize,
            eigen_spectrum: Spectrum::Fraction {
                fraction: 0.05,
                low: 1.0,
                high: 10.0,
            },
            mismatch: MismatchModel::RankOnePerturb { scale: 1.0 },
            policies: vec![
                PolicySpec::InfoGreedy,
                PolicySpec::Batch { k: measurements },
                PolicySpec::Random { k: measurements },
            ],
            sigma2: 0.01,
            epsilon: 0.1,
            p: 0.95,
            power_policy: PowerPolicy::Nominal,
            max_steps: Some(measurements),
            rank_tol: DEFAULT_RANK_TOL,
            trials,
            master_seed: seed,
            output_dir: PathBuf::from("out"),
            workers: None,
            write_traces: true,
            zeta: crate::analysis::DEFAULT_ZETA,
            sketch_constants: None,
        }
    }
}
