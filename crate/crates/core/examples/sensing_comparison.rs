//! Info-Greedy, batch and random sensing of a 500-dimensional low-rank signal
//! whose assumed covariance carries an extra rank-one term `e eᵀ`.
//!
//! cargo run --release --example sensing_comparison -- [trials] [seed]

use infogreedy::harness::{simulate, summarize, ExperimentConfig};

fn main() -> infogreedy::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(2016);
    let cfg = ExperimentConfig::rank_one_comparison(500, 20, trials, seed);

    let start = std::time::Instant::now();
    let outcomes = simulate(&cfg)?;
    let summary = summarize(&cfg, &outcomes);
    println!(
        "n = {}, s = {}, {} trials, {:.1?}",
        cfg.n,
        cfg.s,
        trials,
        start.elapsed()
    );
    println!(
        "{:<12} {:>12} {:>10} {:>12} {:>12}",
        "policy", "mean error", "se", "normalized", "power"
    );
    for p in &summary.policies {
        println!(
            "{:<12} {:>12.5} {:>10.5} {:>12.5} {:>12.3}",
            p.policy, p.error.mean, p.error.se, p.normalized_error.mean, p.total_power.mean
        );
    }
    Ok(())
}
