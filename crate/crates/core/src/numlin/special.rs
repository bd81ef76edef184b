use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

/// `P(χ²_n ≤ q)`, the regularized lower incomplete gamma `P(n/2, q/2)`.
pub fn chi2_cdf(n: usize, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q.is_infinite() {
        return 1.0;
    }
    gamma_lr(n as f64 / 2.0, q / 2.0)
}

/// Quantile of the chi-squared distribution with `n` degrees of freedom,
/// by bisection on the CDF over a bracket that is doubled until it holds `p`.
pub fn chi2_quantile(n: usize, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("chi-squared needs at least one degree of freedom"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let mut lo = 0.0;
    let mut hi = (n as f64).max(1.0);
    while chi2_cdf(n, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    // Bisect to a few ulps of the root: for small n the CDF grows like
    // q^{n/2}, so a width that is merely small in absolute terms is not enough.
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_cdf(n, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
