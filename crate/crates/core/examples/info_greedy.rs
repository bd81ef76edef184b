//! Info-Greedy Sensing with a known covariance: one measurement per
//! eigenvalue above `ε²/χ²_n(p)`, each driving that eigenvalue to the threshold.

use infogreedy::numlin::SymMatrix;
use infogreedy::sensing::run_info_greedy;
use infogreedy::{GaussianModel, SeededRng, SensingConfig};
use rand::SeedableRng;

fn main() -> infogreedy::Result<()> {
    let cov = SymMatrix::from_diagonal(&[8.0, 4.0, 2.0, 0.5, 0.05, 0.0]);
    let model = GaussianModel::zero_mean(cov)?;
    let cfg = SensingConfig::new(0.01, 0.6, 0.95)?;
    let mut rng = SeededRng::seed_from_u64(7);

    let trace = run_info_greedy(&model, &model, &cfg, &mut rng)?;
    let ctx = &trace.context;
    println!("threshold ε²/χ²_n(p) = {:.5}", ctx.threshold);
    println!("{:>4} {:>10} {:>10} {:>12} {:>10}", "k", "λ̂", "β", "tr Σ_k", "‖θ−x‖");
    for s in &trace.steps {
        let m = &s.measurement;
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>12.5} {:>10.4}",
            m.step, m.lambda_hat, m.beta, s.trace_truth, s.error
        );
    }
    println!(
        "stopped ({:?}) after {} measurements, total power {:.4}, final error {:.4}",
        trace.stop,
        trace.len(),
        trace.total_power(),
        trace.error
    );
    Ok(())
}
