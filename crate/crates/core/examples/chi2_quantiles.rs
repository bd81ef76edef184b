//! Table of chi-squared quantiles χ²_n(p) and the resulting sensing
//! thresholds `ε²/χ²_n(p)` at ε = 0.1.

use infogreedy::numlin::{chi2_cdf, chi2_quantile};

fn main() -> infogreedy::Result<()> {
    let ps = [0.5, 0.9, 0.95, 0.99];
    print!("{:>6}", "n");
    for p in ps {
        print!(" {:>14}", format!("p = {p}"));
    }
    println!(" {:>14}", "ε²/χ² (0.95)");
    for n in [1, 2, 5, 10, 50, 500] {
        print!("{n:>6}");
        for p in ps {
            let q = chi2_quantile(n, p)?;
            debug_assert!((chi2_cdf(n, q) - p).abs() < 1e-10);
            print!(" {q:>14.6}");
        }
        println!(" {:>14.3e}", 0.01 / chi2_quantile(n, 0.95)?);
    }
    Ok(())
}
