//! Initialising from a sample covariance: how many samples the sufficient
//! bound asks for, and how close `Σ̂` actually gets at that size and below.

use infogreedy::analysis::sample_size_bound;
use infogreedy::gaussian::sample_covariance_factor;
use infogreedy::numlin::{spectral_norm, SymMatrix};
use infogreedy::{GaussianModel, SeededRng};
use nalgebra::DVector;
use rand::SeedableRng;

fn main() -> infogreedy::Result<()> {
    let n = 10;
    let mut diag = vec![0.0; n];
    diag[..3].copy_from_slice(&[4.0, 2.0, 1.0]);
    let truth = GaussianModel::zero_mean(SymMatrix::from_diagonal(&diag))?;
    let norm = 4.0;
    let tr = truth.covariance().trace();
    let delta0 = 0.25 * norm;
    let bound = sample_size_bound(tr, norm, n, delta0)? as usize;
    println!("target ‖Σ̂ − Σ‖ ≤ {delta0}: bound asks for L = {bound} samples");

    let mut rng = SeededRng::seed_from_u64(1);
    for l in [10, 50, 200, bound] {
        let mut errs = Vec::new();
        for _ in 0..50 {
            let g = sample_covariance_factor(&truth, l, &mut rng)?;
            let est = GaussianModel::from_factor(DVector::zeros(n), &g, 1e-8)?;
            errs.push(spectral_norm(&est.covariance().sub(truth.covariance()))?);
        }
        let hit = errs.iter().filter(|&&e| e <= delta0).count();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        println!("L = {l:>5}: mean error {mean:.4}, within target in {hit}/50");
    }
    Ok(())
}
