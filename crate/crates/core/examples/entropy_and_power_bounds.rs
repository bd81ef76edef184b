//! The entropy and power-overhead bounds evaluated on a small mismatched
//! instance that satisfies their hypotheses.

use infogreedy::analysis::{
    entropy_bound, ideal_power, power_gap_bound, robust_margin, threshold, verify_power_gap, DEFAULT_ZETA,
};
use infogreedy::numlin::{spectral_norm, SymMatrix};
use infogreedy::sensing::run_info_greedy_with_signal;
use infogreedy::{GaussianModel, PowerPolicy, SeededRng, SensingConfig};
use nalgebra::DVector;
use rand::SeedableRng;

fn main() -> infogreedy::Result<()> {
    let (n, s, eps, p, sigma2) = (8, 3, 1.0, 0.9, 0.01);
    let t = threshold(eps, p, n)?;
    let mut diag = vec![0.0; n];
    diag[..s].copy_from_slice(&[40.0 * t, 10.0 * t, 2.0 * t]);
    let truth_cov = SymMatrix::from_diagonal(&diag);
    let w = DVector::from_element(n, 1.0).normalize();
    let delta0 = DEFAULT_ZETA / 4f64.powi(s as i32 + 1) * t * 0.9;
    let assumed_cov = truth_cov.add(&SymMatrix::outer(&w).scale(delta0));
    let truth = GaussianModel::zero_mean(truth_cov)?;
    let assumed = GaussianModel::zero_mean(assumed_cov)?;
    println!(
        "t = {t:.5}, δ₀ = {:.3e}",
        spectral_norm(&assumed.covariance().sub(truth.covariance()))?
    );

    let cfg = SensingConfig::new(sigma2, eps, p)?;
    let x = DVector::from_fn(n, |i, _| diag[i].sqrt() * if i % 2 == 0 { 1.0 } else { -1.0 });
    let nominal = run_info_greedy_with_signal(&assumed, &truth, &cfg, &x, &mut SeededRng::seed_from_u64(1))?;
    let report = entropy_bound(&nominal, DEFAULT_ZETA, s)?;
    println!("entropy bound (hypothesis {}):", report.hypothesis);
    for r in &report.rows {
        println!(
            "  k = {}: observed {:>9.4} ≤ bound {:>9.4}: {}",
            r.step, r.observed, r.bound, r.holds
        );
    }

    let ideal = run_info_greedy_with_signal(&truth, &truth, &cfg, &x, &mut SeededRng::seed_from_u64(1))?;
    let robust_cfg = cfg
        .clone()
        .with_policy(PowerPolicy::Robust {
            delta_s: robust_margin(delta0, s),
        })
        .with_max_steps(s);
    let robust = run_info_greedy_with_signal(&assumed, &truth, &robust_cfg, &x, &mut SeededRng::seed_from_u64(1))?;
    let bound = power_gap_bound(s, ideal.len(), eps, p, n, sigma2)?;
    let gap = verify_power_gap(&ideal, &robust, bound);
    println!(
        "P_ideal = {:.4} (closed form {:.4}), P_mismatch = {:.4}, gap {:.4} < bound {:.4}: {}",
        ideal.total_power(),
        ideal_power(&diag, t, sigma2),
        robust.total_power(),
        gap.rows[0].observed,
        bound,
        gap.all_hold()
    );
    Ok(())
}
