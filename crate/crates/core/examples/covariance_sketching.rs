//! Recovering a low-rank covariance from quadratic sketches
//! `γ_i = (1/N) Σ_j (b_iᵀx_j + w_ij)²` by trace minimisation, then using the
//! estimate to drive Info-Greedy Sensing.

use infogreedy::numlin::spectral_norm;
use infogreedy::sensing::run_info_greedy;
use infogreedy::sketch::{generate_sketches, recover_covariance, SolverOptions};
use infogreedy::{GaussianModel, SeededRng, SensingConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn main() -> infogreedy::Result<()> {
    let (n, s) = (10, 2);
    let mut rng = SeededRng::seed_from_u64(5);
    let u = DMatrix::from_fn(n, s, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let factor = u * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0f64.sqrt(), 1.0]));
    let truth = GaussianModel::from_factor(DVector::zeros(n), &factor, 1e-8)?;

    let (m, samples, l, sigma2) = (4 * n * s, 4000, 4, 0.01);
    let ens = generate_sketches(&truth, m, samples, l, sigma2, &mut rng)?;
    let tau = m as f64 * sigma2 / l as f64;
    let rec = match recover_covariance(&ens, tau, &SolverOptions::default()) {
        Ok(r) => r,
        Err(infogreedy::Error::NotConverged { best }) => *best,
        Err(e) => return Err(e),
    };
    let err = spectral_norm(&rec.x.sub(truth.covariance()))?;
    println!(
        "M = {m}, N = {samples}, L = {l}: {} iterations (converged: {}), tr X = {:.4} (tr Σ = {:.4}), ‖X − Σ‖ = {err:.4}",
        rec.iterations,
        rec.converged,
        rec.objective,
        truth.covariance().trace()
    );

    let assumed = GaussianModel::new(DVector::zeros(n), rec.x, 1e-6)?;
    let cfg = SensingConfig::new(0.01, 0.3, 0.9)?;
    let mut draw = SeededRng::seed_from_u64(11);
    let with_sketch = run_info_greedy(&assumed, &truth, &cfg, &mut draw.clone())?;
    let ideal = run_info_greedy(&truth, &truth, &cfg, &mut draw)?;
    for (name, t) in [("true Σ", &ideal), ("sketched Σ̂", &with_sketch)] {
        println!(
            "{name:<12} measurements {:>2}, power {:>8.3}, error {:.4}, final ‖Σ_K‖ {:.5}",
            t.len(),
            t.total_power(),
            t.error,
            t.steps.last().map_or(0.0, |s| s.norm_truth)
        );
    }
    Ok(())
}
