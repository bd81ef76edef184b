use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MismatchModel, PolicySpec, Spectrum, SCHEMA_VERSION};
use super::seeds::TrialStreams;
use crate::error::{Error, Result};
use crate::gaussian::{sample_covariance_factor, sample_signal, GaussianModel};
use crate::numlin::{orthonormal_columns, spectral_norm};
use crate::sensing::{
    nominal_schedule, run_batch_with_signal, run_info_greedy_with_signal, run_random_with_signal, SensingConfig,
    SensingTrace,
};
use crate::sketch::{generate_sketches, recover_covariance};

pub const RESULTS_HEADER: [&str; 6] = ["trial", "policy", "error", "total_power", "steps", "delta_final"];

/// How `Σ̂` was obtained from sketches in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDiagnostics {
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l1_excess: f64,
}

/// Models and draws of one trial, shared by every policy.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub trial: usize,
    pub eigenvalues: Vec<f64>,
    pub truth: GaussianModel,
    pub assumed: GaussianModel,
    pub signal: DVector<f64>,
    pub streams: TrialStreams,
    pub sketch: Option<SketchDiagnostics>,
}

impl TrialSetup {
    pub fn new(cfg: &ExperimentConfig, trial: usize) -> Result<Self> {
        let mut streams = TrialStreams::new(cfg.master_seed, trial as u64);
        let (n, s) = (cfg.n, cfg.s);
        let eigenvalues = match &cfg.eigen_spectrum {
            Spectrum::Explicit { values } => values.clone(),
            Spectrum::Geometric { first, ratio } => (0..s).map(|i| first * ratio.powi(i as i32)).collect(),
            Spectrum::Fraction { low, high, .. } => {
                let mut v: Vec<f64> = (0..s)
                    .map(|_| low + (high - low) * streams.model.random::<f64>())
                    .collect();
                v.sort_by(|a, b| b.total_cmp(a));
                v
            }
        };
        let g = DMatrix::from_fn(n, s, |_, _| streams.model.sample::<f64, _>(StandardNormal));
        let mut factor = orthonormal_columns(&g);
        for (j, l) in eigenvalues.iter().enumerate() {
            factor.column_mut(j).scale_mut(l.sqrt());
        }
        let zero = DVector::zeros(n);
        let truth = GaussianModel::from_factor(zero.clone(), &factor, cfg.rank_tol)?;

        let mut sketch = None;
        let assumed = match &cfg.mismatch {
            MismatchModel::None => truth.clone(),
            MismatchModel::RankOnePerturb { scale } => {
                let e = DVector::from_fn(n, |_, _| streams.mismatch.sample::<f64, _>(StandardNormal));
                let mut wide = factor.clone().insert_column(s, 0.0);
                wide.column_mut(s).copy_from(&(e * scale.sqrt()));
                GaussianModel::from_factor(zero.clone(), &wide, cfg.rank_tol)?
            }
            MismatchModel::SampleCov { samples } => {
                let g = sample_covariance_factor(&truth, *samples, &mut streams.mismatch)?;
                GaussianModel::from_factor(zero.clone(), &g, cfg.rank_tol)?
            }
            MismatchModel::Sketch {
                m,
                n_samples,
                l,
                sigma2,
                tau,
                solver,
            } => {
                let ens = generate_sketches(&truth, *m, *n_samples, *l, *sigma2, &mut streams.mismatch)?;
                let tau = tau.unwrap_or(*m as f64 * sigma2 / *l as f64);
                let opts = solver.unwrap_or_default();
                let rec = match recover_covariance(&ens, tau, &opts) {
                    Ok(r) => r,
                    Err(Error::NotConverged { best }) => *best,
                    Err(e) => return Err(e),
                };
                sketch = Some(SketchDiagnostics {
                    tau,
                    iterations: rec.iterations,
                    converged: rec.converged,
                    l1_excess: rec.l1_excess,
                });
                GaussianModel::new(zero.clone(), rec.x, cfg.rank_tol)?
            }
        };
        let signal = sample_signal(&truth, &mut streams.signal);
        Ok(Self {
            trial,
            eigenvalues,
            truth,
            assumed,
            signal,
            streams,
            sketch,
        })
    }

    /// Runs one policy on this trial's signal with a fresh copy of the noise
    /// stream, so every policy sees the same noise sequence.
    pub fn run(&self, policy: PolicySpec, cfg: &SensingConfig) -> Result<SensingTrace> {
        let mut noise = self.streams.noise.clone();
        match policy {
            PolicySpec::InfoGreedy => {
                run_info_greedy_with_signal(&self.assumed, &self.truth, cfg, &self.signal, &mut noise)
            }
            PolicySpec::Batch { k } => {
                run_batch_with_signal(&self.assumed, &self.truth, cfg, k, &self.signal, &mut noise)
            }
            PolicySpec::Random { k } => {
                let powers = nominal_schedule(&self.assumed, cfg, k)?;
                let mut dirs = self.streams.directions.clone();
                run_random_with_signal(&self.truth, cfg, &powers, &self.signal, &mut dirs, &mut noise)
            }
        }
    }

    /// `‖Σ̂ − Σ‖`
    pub fn delta0(&self) -> Result<f64> {
        spectral_norm(&self.assumed.covariance().sub(self.truth.covariance()))
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub policy: String,
    pub error: f64,
    pub normalized_error: f64,
    pub total_power: f64,
    pub steps: usize,
    pub delta_final: f64,
    /// File under `traces/` holding the full trajectory, if written.
    pub trace_file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub traces: Vec<SensingTrace>,
    pub sketch: Option<SketchDiagnostics>,
}

pub fn run_trial(cfg: &ExperimentConfig, sensing: &SensingConfig, trial: usize) -> Result<TrialOutcome> {
    let setup = TrialSetup::new(cfg, trial)?;
    let traces = cfg
        .policies
        .iter()
        .map(|&p| setup.run(p, sensing).map(|t| t.compact()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialOutcome {
        trial,
        traces,
        sketch: setup.sketch,
    })
}

/// Runs every trial without touching the filesystem, ordered by trial index.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let sensing = cfg.sensing()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("workers", format!("cannot start thread pool: {e}")))?;
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &sensing, t))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation.
    pub std: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                median: f64::NAN,
                std: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            median,
            std,
            se: std / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub error: Stats,
    pub normalized_error: Stats,
    pub total_power: Stats,
    pub steps: Stats,
    pub delta_final: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub trials: usize,
    pub master_seed: u64,
    pub n: usize,
    pub s: usize,
    pub policies: Vec<PolicySummary>,
    /// Sketch recoveries that hit the iteration cap.
    #[serde(default)]
    pub unconverged_sketches: usize,
}

impl ExperimentSummary {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == name)
    }
}

/// Mean error after each measurement, one row per measurement count. Traces
/// that stopped early keep their final error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub policy: String,
    pub mean_error: Vec<f64>,
    pub mean_normalized_error: Vec<f64>,
}

pub fn error_curves(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Vec<ErrorCurve> {
    cfg.policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let traces: Vec<&SensingTrace> = outcomes.iter().map(|o| &o.traces[i]).collect();
            let len = traces.iter().map(|t| t.len() + 1).max().unwrap_or(1);
            let mut sum = vec![0.0; len];
            let mut sum_norm = vec![0.0; len];
            for t in &traces {
                let errs = t.errors();
                let scale = if t.signal_norm > 0.0 { 1.0 / t.signal_norm } else { 0.0 };
                for k in 0..len {
                    let e = errs[k.min(errs.len() - 1)];
                    sum[k] += e;
                    sum_norm[k] += e * scale;
                }
            }
            let count = traces.len().max(1) as f64;
            ErrorCurve {
                policy: p.name().to_string(),
                mean_error: sum.iter().map(|v| v / count).collect(),
                mean_normalized_error: sum_norm.iter().map(|v| v / count).collect(),
            }
        })
        .collect()
}

pub fn trial_results(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Vec<TrialResult> {
    outcomes
        .iter()
        .flat_map(|o| {
            o.traces.iter().map(move |t| TrialResult {
                trial: o.trial,
                policy: t.policy.name().to_string(),
                error: t.error,
                normalized_error: t.normalized_error(),
                total_power: t.total_power(),
                steps: t.len(),
                delta_final: t.delta_final(),
                trace_file: cfg.write_traces.then(|| trace_file_name(o.trial, t.policy.name())),
            })
        })
        .collect()
}

pub fn summarize(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> ExperimentSummary {
    let results = trial_results(cfg, outcomes);
    let policies = cfg
        .policies
        .iter()
        .map(|p| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.policy == p.name()).collect();
            let col = |f: fn(&TrialResult) -> f64| Stats::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            PolicySummary {
                policy: p.name().to_string(),
                error: col(|r| r.error),
                normalized_error: col(|r| r.normalized_error),
                total_power: col(|r| r.total_power),
                steps: col(|r| r.steps as f64),
                delta_final: col(|r| r.delta_final),
            }
        })
        .collect();
    ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        n: cfg.n,
        s: cfg.s,
        policies,
        unconverged_sketches: outcomes
            .iter()
            .filter(|o| o.sketch.as_ref().is_some_and(|s| !s.converged))
            .count(),
    }
}

fn trace_file_name(trial: usize, policy: &str) -> String {
    format!("trial_{trial:05}_{policy}.json")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_results_csv(path: &Path, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.trial.to_string(),
            r.policy.clone(),
            r.error.to_string(),
            r.total_power.to_string(),
            r.steps.to_string(),
            r.delta_final.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_curve(path: &Path, curve: &ErrorCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["measurement", "mean_error", "mean_normalized_error"])?;
    for (k, (e, ne)) in curve.mean_error.iter().zip(&curve.mean_normalized_error).enumerate() {
        w.write_record([k.to_string(), e.to_string(), ne.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let mut f = create_file(path)?;
    if pretty {
        serde_json::to_writer_pretty(&mut f, value)?;
    } else {
        serde_json::to_writer(&mut f, value)?;
    }
    f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
    pub traces_dir: Option<PathBuf>,
    pub plotdata_dir: PathBuf,
}

/// Runs all trials and writes `results.csv`, `summary.json`, `plotdata/` and,
/// unless disabled, `traces/` under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let outcomes = simulate(cfg)?;

    let results = trial_results(cfg, &outcomes);
    let results_csv = dir.join("results.csv");
    write_results_csv(&results_csv, &results)?;

    let traces_dir = if cfg.write_traces {
        let td = dir.join("traces");
        create_dir(&td)?;
        for o in &outcomes {
            for t in &o.traces {
                write_json(&td.join(trace_file_name(o.trial, t.policy.name())), t, false)?;
            }
        }
        Some(td)
    } else {
        None
    };

    let plotdata_dir = dir.join("plotdata");
    create_dir(&plotdata_dir)?;
    for curve in error_curves(cfg, &outcomes) {
        write_curve(&plotdata_dir.join(format!("{}.csv", curve.policy)), &curve)?;
    }

    let summary = summarize(cfg, &outcomes);
    let summary_json = dir.join("summary.json");
    write_json(&summary_json, &summary, true)?;
    Ok(ExperimentOutput {
        summary,
        results_csv,
        summary_json,
        traces_dir,
        plotdata_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::PowerPolicy;

    fn tiny(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            n: 4,
            s: 2,
            eigen_spectrum: Spectrum::Explicit { values: vec![3.0, 1.0] },
            mismatch: MismatchModel::None,
            policies: vec![PolicySpec::InfoGreedy],
            sigma2: 0.1,
            epsilon: 0.5,
            p: 0.9,
            power_policy: PowerPolicy::Nominal,
            max_steps: None,
            rank_tol: 1e-8,
            trials: 1,
            master_seed: 11,
            output_dir: dir.to_path_buf(),
            workers: Some(2),
            write_traces: true,
            zeta: 0.5,
            sketch_constants: None,
        }
    }

    #[test]
    fn tiny_run_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = run_experiment(&tiny(d1.path())).unwrap();
        let mut c2 = tiny(d2.path());
        c2.workers = Some(1);
        run_experiment(&c2).unwrap();
        let a = fs::read_to_string(&o1.results_csv).unwrap();
        let b = fs::read_to_string(d2.path().join("results.csv")).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], "trial,policy,error,total_power,steps,delta_final");
        assert_eq!(lines.len(), 2);
        let err: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
        assert!(d1.path().join("traces/trial_00000_info_greedy.json").exists());
        assert!(d1.path().join("plotdata/info_greedy.csv").exists());
        assert!(o1.summary_json.exists());
    }

    #[test]
    fn trial_results_do_not_depend_on_trial_count() {
        let d = tempfile::tempdir().unwrap();
        let mut c = tiny(d.path());
        c.policies = vec![
            PolicySpec::InfoGreedy,
            PolicySpec::Batch { k: 2 },
            PolicySpec::Random { k: 2 },
        ];
        c.mismatch = MismatchModel::RankOnePerturb { scale: 0.5 };
        c.trials = 3;
        let few = trial_results(&c, &simulate(&c).unwrap());
        c.trials = 7;
        let many = trial_results(&c, &simulate(&c).unwrap());
        assert_eq!(few[..], many[..few.len()]);
    }

    #[test]
    fn policies_share_signal_and_noise() {
        let d = tempfile::tempdir().unwrap();
        let mut c = tiny(d.path());
        c.policies = vec![PolicySpec::InfoGreedy, PolicySpec::Batch { k: 2 }];
        let o = simulate(&c).unwrap();
        let (ig, b) = (&o[0].traces[0], &o[0].traces[1]);
        assert_eq!(ig.signal_norm, b.signal_norm);
        // Without mismatch both measure the same eigenvectors with the same
        // powers and noise, so the outcomes coincide.
        for (x, y) in ig.steps.iter().zip(&b.steps) {
            assert!((x.measurement.y - y.measurement.y).abs() < 1e-10);
        }
        assert!((ig.error - b.error).abs() < 1e-9);
    }

    #[test]
    fn perturbed_model_contains_truth() {
        let d = tempfile::tempdir().unwrap();
        let mut c = tiny(d.path());
        c.mismatch = MismatchModel::RankOnePerturb { scale: 1.0 };
        let s = TrialSetup::new(&c, 0).unwrap();
        assert_eq!(s.truth.rank(), 2);
        assert_eq!(s.assumed.rank(), 3);
        let diff = s.assumed.covariance().sub(s.truth.covariance());
        // Σ̂ − Σ = e eᵀ has a single non-zero eigenvalue equal to ‖e‖².
        let vals = crate::numlin::eigvals_sym(&diff).unwrap();
        assert!(vals[1].abs() < 1e-10 && vals[0] > 0.0);
    }

    #[test]
    fn stats_examples() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.se - s.std / 2.0).abs() < 1e-15);
        assert_eq!(Stats::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let d = tempfile::tempdir().unwrap();
        let blocker = d.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let c = tiny(&blocker.join("sub"));
        assert!(matches!(run_experiment(&c), Err(Error::Io { .. })));
    }
}
