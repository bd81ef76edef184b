//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 runtime failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    entropy_bound, lemma_checks, power_gap_bound, robust_margin, sample_size_bound, verify_power_gap, LemmaReport,
};
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::harness::{run_experiment, ExperimentConfig, PolicySpec, TrialSetup};
use crate::numlin::{chi2_quantile, spectral_norm, SymMatrix, DEFAULT_RANK_TOL};
use crate::sensing::{run_info_greedy_with_signal, PowerPolicy, SensingTrace};
use crate::sketch::{
    generate_sketches, load_ensemble, recover_covariance, save_ensemble, sketch_params, SketchEnsemble, SolverOptions,
};
use crate::SeededRng;

#[derive(Debug, Parser)]
#[command(
    name = "infogreedy",
    version,
    about = "Info-Greedy Sensing of low-rank Gaussian signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one policy on one trial of an experiment config and print a summary.
    Sense(SenseArgs),
    /// Run every trial of an experiment config and write results.
    Experiment(ExperimentArgs),
    /// Generate a sketch ensemble and/or recover a covariance from one.
    SketchRecover(SketchArgs),
    /// Evaluate the entropy, power and sample-size bounds.
    Bounds(BoundsArgs),
    /// Chi-squared quantile χ²_n(p).
    Quantile(QuantileArgs),
}

#[derive(Debug, Args)]
struct SenseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Policy name from the config (`info_greedy`, `batch`, `random`);
    /// defaults to the first listed.
    #[arg(long)]
    policy: Option<String>,
    /// Write the full trace as JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SketchArgs {
    /// Existing ensemble CSV (with its JSON sidecar).
    #[arg(long, conflicts_with_all = ["eigenvalues", "m"])]
    ensemble: Option<PathBuf>,
    /// Comma-separated eigenvalues of the true covariance; the basis is
    /// random. Required to generate.
    #[arg(long, value_delimiter = ',')]
    eigenvalues: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of sketches.
    #[arg(long)]
    m: Option<usize>,
    /// Signal copies per sketch.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Noisy repetitions averaged per sketch.
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the generated ensemble here.
    #[arg(long)]
    save_ensemble: Option<PathBuf>,
    /// Generate only.
    #[arg(long)]
    no_solve: bool,
    /// ℓ1 radius; defaults to `M σ²/L`.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Write the recovered matrix as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Experiment config; bounds are evaluated on one of its trials.
    #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
    config: Option<PathBuf>,
    /// Saved trace JSON; only the entropy bound and lemma checks apply.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    zeta: Option<f64>,
    /// Target `‖Σ̂ − Σ‖` for the sample-size bound; defaults to the trial's.
    #[arg(long)]
    delta0: Option<f64>,
}

#[derive(Debug, Args)]
struct QuantileArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`cli_main`] with explicit output streams.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Sense(a) => sense(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::SketchRecover(a) => sketch_recover(a, out),
        Command::Bounds(a) => bounds(a, out),
        Command::Quantile(a) => quantile(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 1,
        _ => 2,
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out).map_err(io_out)
}

fn quantile(a: QuantileArgs, out: &mut dyn Write) -> Result<()> {
    let q = chi2_quantile(a.n, a.p).map_err(|e| Error::config("quantile", e.to_string()))?;
    writeln!(out, "{q}").map_err(io_out)
}

fn select_policy(cfg: &ExperimentConfig, name: Option<&str>) -> Result<PolicySpec> {
    match name {
        None => Ok(cfg.policies[0]),
        Some(n) => cfg
            .policies
            .iter()
            .copied()
            .find(|p| p.name() == n.replace('-', "_"))
            .ok_or_else(|| Error::config("policy", format!("policy {n} is not listed in the config"))),
    }
}

fn check_trial(cfg: &ExperimentConfig, trial: usize) -> Result<()> {
    if trial >= cfg.trials {
        return Err(Error::config(
            "trial",
            format!("trial {trial} out of range 0..{}", cfg.trials),
        ));
    }
    Ok(())
}

fn sense(a: SenseArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    check_trial(&cfg, a.trial)?;
    let policy = select_policy(&cfg, a.policy.as_deref())?;
    let sensing = cfg.sensing()?;
    let setup = TrialSetup::new(&cfg, a.trial)?;
    let trace = setup.run(policy, &sensing)?;
    let ctx = &trace.context;
    let above = setup
        .assumed
        .support_values()
        .iter()
        .filter(|&&l| l > ctx.threshold)
        .count();
    let lines = [
        format!("policy: {}", trace.policy.name()),
        format!("trial: {}", a.trial),
        format!("n: {}", ctx.n),
        format!("threshold: {}", ctx.threshold),
        format!("eigenvalues_above_threshold: {above}"),
        format!("steps: {}", trace.len()),
        format!("stop: {}", serde_json::to_string(&trace.stop)?.trim_matches('"')),
        format!("total_power: {}", trace.total_power()),
        format!("error: {}", trace.error),
        format!("normalized_error: {}", trace.normalized_error()),
        format!("delta0: {}", ctx.delta0),
        format!("delta_final: {}", trace.delta_final()),
    ];
    for l in lines {
        writeln!(out, "{l}").map_err(io_out)?;
    }
    if let Some(path) = a.trace_out {
        let text = serde_json::to_string(&trace)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn experiment(a: ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg.validate()?;
    let o = run_experiment(&cfg)?;
    writeln!(out, "wrote {}", o.results_csv.display()).map_err(io_out)?;
    writeln!(
        out,
        "{:<12} {:>14} {:>12} {:>14}",
        "policy", "mean_error", "se", "mean_power"
    )
    .map_err(io_out)?;
    for p in &o.summary.policies {
        writeln!(
            out,
            "{:<12} {:>14.6} {:>12.6} {:>14.6}",
            p.policy, p.error.mean, p.error.se, p.total_power.mean
        )
        .map_err(io_out)?;
    }
    Ok(())
}

fn sketch_recover(a: SketchArgs, out: &mut dyn Write) -> Result<()> {
    let (ensemble, truth): (SketchEnsemble, Option<GaussianModel>) = match &a.ensemble {
        Some(p) => (load_ensemble(p)?, None),
        None => {
            let values = a
                .eigenvalues
                .clone()
                .ok_or_else(|| Error::config("eigenvalues", "give --ensemble or --eigenvalues to generate"))?;
            let m = a.m.ok_or_else(|| Error::config("m", "--m is required to generate"))?;
            let n = a.n.unwrap_or(values.len());
            if values.len() > n || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::config(
                    "eigenvalues",
                    format!("need at most n = {n} non-negative eigenvalues"),
                ));
            }
            let mut rng = SeededRng::seed_from_u64(a.seed);
            let model = random_basis_model(n, &values, &mut rng)?;
            let e = generate_sketches(&model, m, a.samples, a.l, a.sigma2, &mut rng)
                .map_err(|e| Error::config("sketch", e.to_string()))?;
            (e, Some(model))
        }
    };
    if let Some(p) = &a.save_ensemble {
        save_ensemble(&ensemble, p)?;
        writeln!(out, "ensemble: {}", p.display()).map_err(io_out)?;
    }
    if a.no_solve {
        return Ok(());
    }
    let mut opts = SolverOptions::default();
    if let Some(k) = a.max_iterations {
        opts.max_iterations = k;
    }
    if let Some(r) = a.rho {
        opts.rho = r;
    }
    let tau = a
        .tau
        .unwrap_or(ensemble.m() as f64 * ensemble.sigma2 / ensemble.l as f64);
    let rec = recover_covariance(&ensemble, tau, &opts)?;
    writeln!(out, "m: {}", ensemble.m()).map_err(io_out)?;
    writeln!(out, "tau: {tau}").map_err(io_out)?;
    writeln!(out, "iterations: {}", rec.iterations).map_err(io_out)?;
    writeln!(out, "trace: {}", rec.objective).map_err(io_out)?;
    writeln!(out, "l1_residual: {}", rec.l1_residual).map_err(io_out)?;
    if let Some(t) = &truth {
        let diff = rec.x.sub(t.covariance());
        let rel = diff.frobenius_norm() / t.covariance().frobenius_norm().max(f64::MIN_POSITIVE);
        writeln!(out, "relative_frobenius_error: {rel}").map_err(io_out)?;
        writeln!(out, "spectral_error: {}", spectral_norm(&diff)?).map_err(io_out)?;
    }
    if let Some(p) = &a.output {
        let text = serde_json::to_string(&rec.x)?;
        std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn random_basis_model(n: usize, values: &[f64], rng: &mut SeededRng) -> Result<GaussianModel> {
    use rand::Rng;
    let g = nalgebra::DMatrix::from_fn(n, values.len().max(1), |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let mut f = crate::numlin::orthonormal_columns(&g);
    for (j, l) in values.iter().enumerate() {
        f.column_mut(j).scale_mut(l.sqrt());
    }
    if values.is_empty() {
        f.fill(0.0);
    }
    GaussianModel::from_factor(DVector::zeros(n), &f, DEFAULT_RANK_TOL)
}

fn lemma_summary(r: &LemmaReport) -> serde_json::Value {
    json!({
        "steps": r.rows.len(),
        "contraction": r.contraction_ok(),
        "trace_decrease": r.trace_decrease_ok(),
        "rank_preserved": r.rank_ok(),
        "trace_recursion": r.trace_recursion_ok(),
    })
}

fn bounds(a: BoundsArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.trace {
        let text = std::fs::read_to_string(p).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
        let trace: SensingTrace = serde_json::from_str(&text)
            .map_err(|e| Error::config(p.display().to_string(), format!("invalid trace: {e}")))?;
        let zeta = a.zeta.unwrap_or(crate::analysis::DEFAULT_ZETA);
        let entropy = entropy_bound(&trace, zeta, trace.context.s)?;
        return print_json(
            out,
            &json!({ "entropy": entropy, "lemmas": lemma_summary(&lemma_checks(&trace)) }),
        );
    }
    let path = a.config.as_ref().expect("clap requires --config or --trace");
    let cfg = ExperimentConfig::load(path)?;
    check_trial(&cfg, a.trial)?;
    let zeta = a.zeta.unwrap_or(cfg.zeta);
    let sensing = cfg.sensing()?;
    let setup = TrialSetup::new(&cfg, a.trial)?;
    let s = setup.truth.rank();
    let delta0 = setup.delta0()?;

    let nominal = setup.run(PolicySpec::InfoGreedy, &sensing)?;
    let entropy = if nominal.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::to_value(entropy_bound(&nominal, zeta, s)?)?
    };

    // Power gap: ideal run on the true model against the robust schedule on Σ̂.
    let mut noise = setup.streams.noise.clone();
    let ideal = run_info_greedy_with_signal(&setup.truth, &setup.truth, &sensing, &setup.signal, &mut noise)?;
    let delta_s = robust_margin(delta0, s);
    let robust_cfg = sensing
        .clone()
        .with_policy(PowerPolicy::Robust { delta_s })
        .with_max_steps(s);
    let power_gap = match robust_cfg.thresholds(cfg.n) {
        Ok(_) => {
            let mut noise = setup.streams.noise.clone();
            let robust =
                run_info_greedy_with_signal(&setup.assumed, &setup.truth, &robust_cfg, &setup.signal, &mut noise)?;
            let k = ideal.len().min(s);
            let bound = power_gap_bound(s, k, cfg.epsilon, cfg.p, cfg.n, cfg.sigma2)?;
            let report = verify_power_gap(&ideal, &robust, bound);
            json!({ "delta_s": delta_s, "k": k, "report": report })
        }
        Err(e) => json!({ "delta_s": delta_s, "skipped": e.to_string() }),
    };

    let cov: &SymMatrix = setup.truth.covariance();
    let target = a.delta0.unwrap_or(delta0);
    let norm = spectral_norm(cov)?;
    let samples = if target > 0.0 && norm > 0.0 {
        json!(sample_size_bound(cov.trace(), norm, cfg.n, target)?)
    } else {
        serde_json::Value::Null
    };

    let sketch = if target > 0.0 && norm > 0.0 && s > 0 {
        let consts = cfg.sketch_constants.unwrap_or_default();
        serde_json::to_value(sketch_params(cfg.n, s, cov.trace(), norm, target, cfg.sigma2, consts)?)?
    } else {
        serde_json::Value::Null
    };

    print_json(
        out,
        &json!({
            "trial": a.trial,
            "s": s,
            "delta0": delta0,
            "threshold": nominal.context.threshold,
            "entropy": entropy,
            "lemmas": lemma_summary(&lemma_checks(&nominal)),
            "power_gap": power_gap,
            "sample_size": { "delta0": target, "samples": samples },
            "sketch": sketch,
        }),
    )
}
