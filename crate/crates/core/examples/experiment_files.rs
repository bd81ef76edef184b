//! Runs a small seeded experiment from a JSON config and lists the files it
//! writes. Pass a config path to use your own.
//!
//! cargo run --example experiment_files -- [config.json]

use infogreedy::harness::{run_experiment, ExperimentConfig};

fn main() -> infogreedy::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut c = ExperimentConfig::rank_one_comparison(100, 10, 20, 42);
            c.output_dir = std::env::temp_dir().join("infogreedy-example");
            println!("config:\n{}", c.to_json()?);
            c
        }
    };
    let out = run_experiment(&cfg)?;
    println!("results: {}", out.results_csv.display());
    println!("summary: {}", out.summary_json.display());
    println!("plot data: {}", out.plotdata_dir.display());
    if let Some(t) = &out.traces_dir {
        println!("traces: {}", t.display());
    }
    for p in &out.summary.policies {
        println!(
            "{:<12} mean error {:.4} (median {:.4})",
            p.policy, p.error.mean, p.error.median
        );
    }
    Ok(())
}
