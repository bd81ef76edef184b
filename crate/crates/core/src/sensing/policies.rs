use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use super::engine::Engine;
use super::{PolicyKind, SensingConfig, SensingTrace, StopReason};
use crate::error::{Error, Result};
use crate::gaussian::{sample_signal, GaussianModel};

fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Info-Greedy sensing: measure the top eigenvector of the assumed posterior
/// covariance with the configured power until its largest eigenvalue reaches
/// the target or `max_steps` measurements are spent.
///
/// Draws the signal from `truth`, then one standard normal per measurement.
pub fn run_info_greedy<R: Rng + ?Sized>(
    assumed: &GaussianModel,
    truth: &GaussianModel,
    cfg: &SensingConfig,
    rng: &mut R,
) -> Result<SensingTrace> {
    let x = sample_signal(truth, rng);
    run_info_greedy_with_signal(assumed, truth, cfg, &x, rng)
}

/// [`run_info_greedy`] on a given signal; `noise` supplies one standard
/// normal per measurement.
pub fn run_info_greedy_with_signal<R: Rng + ?Sized>(
    assumed: &GaussianModel,
    truth: &GaussianModel,
    cfg: &SensingConfig,
    signal: &DVector<f64>,
    noise: &mut R,
) -> Result<SensingTrace> {
    let mut engine = Engine::new(assumed, truth, cfg, signal)?;
    let thr = *engine.thresholds();
    let max_steps = cfg.max_steps.unwrap_or(assumed.dim());
    let stop = loop {
        let Some((lambda, u)) = engine.assumed_top()? else {
            break StopReason::Converged;
        };
        if lambda <= 0.0 || thr.reached(lambda) {
            break StopReason::Converged;
        }
        if engine.steps_taken() >= max_steps {
            break StopReason::MaxSteps;
        }
        let beta = thr.power(lambda);
        if beta <= 0.0 {
            break StopReason::NonPositivePower;
        }
        engine.measure(u, beta, lambda, draw_noise(noise))?;
    };
    Ok(engine.finish(PolicyKind::InfoGreedy, stop))
}

/// Powers the configured policy assigns to the `k` leading eigenvalues of the
/// assumed covariance, clamped at zero and padded with zeros past its rank.
/// The batch strategy uses exactly these; the random baseline borrows them.
pub fn nominal_schedule(assumed: &GaussianModel, cfg: &SensingConfig, k: usize) -> Result<Vec<f64>> {
    let thr = cfg.thresholds(assumed.dim())?;
    let values = assumed.support_values();
    Ok((0..k)
        .map(|j| values.get(j).map_or(0.0, |&l| thr.power(l).max(0.0)))
        .collect())
}

/// Batch sensing: `k` measurements along the leading eigenvectors of the
/// initial assumed covariance, powers from its initial eigenvalues, and a
/// single joint posterior mean at the end. Only directions with a positive
/// eigenvalue exist, so at most `rank(Σ̂)` measurements are taken.
pub fn run_batch<R: Rng + ?Sized>(
    assumed: &GaussianModel,
    truth: &GaussianModel,
    cfg: &SensingConfig,
    k: usize,
    rng: &mut R,
) -> Result<SensingTrace> {
    let x = sample_signal(truth, rng);
    run_batch_with_signal(assumed, truth, cfg, k, &x, rng)
}

pub fn run_batch_with_signal<R: Rng + ?Sized>(
    assumed: &GaussianModel,
    truth: &GaussianModel,
    cfg: &SensingConfig,
    k: usize,
    signal: &DVector<f64>,
    noise: &mut R,
) -> Result<SensingTrace> {
    let mut engine = Engine::new(assumed, truth, cfg, signal)?;
    let thr = *engine.thresholds();
    let eig = engine.assumed_eigen()?;
    let core0 = engine.assumed_core().clone();
    let theta0 = engine.theta().clone();

    let usable = eig.values.iter().take_while(|&&l| l > 0.0).count().min(k);
    let mut rows = Vec::with_capacity(usable);
    let mut ys = Vec::with_capacity(usable);
    for j in 0..usable {
        let lambda = eig.values[j];
        let u = eig.vector(j);
        let beta = thr.power(lambda).max(0.0);
        let a = &u * beta.sqrt();
        ys.push(engine.measure(u, beta, lambda, draw_noise(noise))?);
        rows.push(engine.project(&a));
    }
    if usable == 0 {
        return Ok(engine.finish(PolicyKind::Batch, StopReason::Budget));
    }

    // θ = θ₀ + Σ̂Aᵀ (AΣ̂Aᵀ + σ²I)⁻¹ (y − Aθ₀), with A = B Vᵀ in basis coordinates.
    let r = core0.dim();
    let b = DMatrix::from_fn(usable, r, |i, j| rows[i][j]);
    let cb = core0.as_matrix() * b.transpose();
    let mut gram = &b * &cb;
    for i in 0..usable {
        gram[(i, i)] += cfg.sigma2;
    }
    let theta0_core = engine.project(&theta0);
    let resid = DVector::from_fn(usable, |i, _| ys[i] - b.row(i).dot(&theta0_core.transpose()));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("batch Gram matrix is not positive definite"))?;
    let weights = chol.solve(&resid);
    let estimate = theta0 + engine.lift(&(cb * weights));
    Ok(engine.finish_with_estimate(PolicyKind::Batch, StopReason::Budget, estimate))
}

/// Random baseline: `a_k = √β_k g_k/‖g_k‖` with `g_k` standard normal and
/// the posterior computed under the true model. One measurement per entry of
/// `powers`.
pub fn run_random<R: Rng + ?Sized>(
    truth: &GaussianModel,
    cfg: &SensingConfig,
    powers: &[f64],
    rng: &mut R,
) -> Result<SensingTrace> {
    let x = sample_signal(truth, rng);
    let mut directions = rand_chacha::ChaCha20Rng::seed_from_u64(rng.random());
    run_random_with_signal(truth, cfg, powers, &x, &mut directions, rng)
}

pub fn run_random_with_signal<R: Rng + ?Sized, D: Rng + ?Sized>(
    truth: &GaussianModel,
    cfg: &SensingConfig,
    powers: &[f64],
    signal: &DVector<f64>,
    directions: &mut D,
    noise: &mut R,
) -> Result<SensingTrace> {
    if let Some(b) = powers.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::invalid(format!(
            "measurement power must be non-negative, got {b}"
        )));
    }
    let n = truth.dim();
    let mut engine = Engine::new(truth, truth, cfg, signal)?;
    for &beta in powers {
        let u = loop {
            let g = DVector::from_fn(n, |_, _| directions.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            if norm > 0.0 {
                break g / norm;
            }
        };
        let lambda = u.dot(&engine.assumed_apply(&u));
        engine.measure(u, beta, lambda, draw_noise(noise))?;
    }
    Ok(engine.finish(PolicyKind::Random, StopReason::Budget))
}
