//! Sensing with a wrong covariance: the algorithm plans on `Σ̂ = Σ + E` while
//! the signal comes from `Σ`. Prints how the mismatch `δ_k = ‖Σ̂_k − Σ_k‖`
//! evolves and how the true posterior compares with the believed one.

use infogreedy::numlin::SymMatrix;
use infogreedy::sensing::run_info_greedy;
use infogreedy::{GaussianModel, SeededRng, SensingConfig};
use nalgebra::DVector;
use rand::SeedableRng;

fn main() -> infogreedy::Result<()> {
    let truth = SymMatrix::from_diagonal(&[5.0, 3.0, 1.0, 0.0, 0.0]);
    let e = DVector::from_vec(vec![0.3, -0.2, 0.4, 0.5, 0.1]);
    let assumed = truth.add(&SymMatrix::outer(&e));

    let truth = GaussianModel::zero_mean(truth)?;
    let assumed = GaussianModel::zero_mean(assumed)?;
    let cfg = SensingConfig::new(0.05, 0.5, 0.9)?;
    let trace = run_info_greedy(&assumed, &truth, &cfg, &mut SeededRng::seed_from_u64(3))?;

    println!(
        "δ_0 = {:.4}, threshold = {:.4}",
        trace.context.delta0, trace.context.threshold
    );
    println!("{:>3} {:>9} {:>11} {:>11} {:>9}", "k", "δ_k", "‖Σ̂_k‖", "‖Σ_k‖", "error");
    for s in &trace.steps {
        println!(
            "{:>3} {:>9.4} {:>11.4} {:>11.4} {:>9.4}",
            s.measurement.step, s.delta, s.norm_assumed, s.norm_truth, s.error
        );
    }
    println!("measurements: {}, total power: {:.3}", trace.len(), trace.total_power());
    Ok(())
}
