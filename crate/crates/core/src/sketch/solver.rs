//! `min tr(X)  s.t.  X ⪰ 0, ‖γ − B(X)‖₁ ≤ τ` by ADMM.
//!
//! Splitting: `X` carries the objective, `Z = X` carries the PSD cone and
//! `r = B(X)` carries the ℓ1 ball around `γ`. The `X` step is the linear
//! system `(I + BᵀB) X = rhs`, solved through the `M × M` Gram matrix
//! `G_ij = (b_iᵀ b_j)²` by the Woodbury identity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{apply_adjoint, apply_operator, SketchEnsemble};
use crate::error::{Error, Result};
use crate::numlin::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rho: f64,
    pub max_iterations: usize,
    /// Relative tolerance on the ℓ1 constraint and the ADMM residuals.
    pub feas_tol: f64,
    /// Eigenvalues of the returned matrix are at least `−psd_tol·max(1, ‖X‖)`.
    pub psd_tol: f64,
    /// Relative change in `tr(X)` between iterations treated as stationary.
    pub obj_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 5000,
            feas_tol: 1e-6,
            psd_tol: 1e-9,
            obj_tol: 1e-6,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.rho) && ok(self.feas_tol) && ok(self.psd_tol) && ok(self.obj_tol)) {
            return Err(Error::invalid("solver tolerances and rho must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("solver needs at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub x: SymMatrix,
    pub iterations: usize,
    /// `tr(X)`
    pub objective: f64,
    /// `‖γ − B(X)‖₁`
    pub l1_residual: f64,
    /// `max(0, ‖γ − B(X)‖₁ − τ)`
    pub l1_excess: f64,
    /// `‖(X − Z, B(X) − r)‖` in the solver's scaled units.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

/// Euclidean projection of `v` onto `{x : ‖x − center‖₁ ≤ radius}` by sorting
/// magnitudes and soft-thresholding.
pub fn project_l1_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = v - center;
    if d.lp_norm(1) <= radius {
        return v.clone();
    }
    if radius <= 0.0 {
        return center.clone();
    }
    let mut mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (j + 1) as f64;
        if *m > t {
            theta = t;
        } else {
            break;
        }
    }
    center + d.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let scaled = DMatrix::from_fn(vals.len(), vals.len(), |i, j| eig.eigenvectors[(j, i)] * vals[i]);
    &eig.eigenvectors * scaled
}

/// Solves the trace-minimisation program for `ensemble` with ℓ1 radius `tau`.
///
/// On hitting the iteration cap returns [`Error::NotConverged`] carrying the
/// best iterate: the projected PSD iterate with the smallest ℓ1 excess, ties
/// broken by trace.
pub fn recover_covariance(ensemble: &SketchEnsemble, tau: f64, opts: &SolverOptions) -> Result<Recovery> {
    opts.validate()?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be non-negative, got {tau}")));
    }
    let n = ensemble.dim();
    let m = ensemble.m();
    let gamma = &ensemble.gamma;
    let allowed = tau + opts.feas_tol * tau.max(gamma.lp_norm(1));
    let evaluate = |x: &SymMatrix| -> Result<(f64, f64)> {
        let l1 = (gamma - apply_operator(&ensemble.b, x)?).lp_norm(1);
        Ok((l1, (l1 - tau).max(0.0)))
    };

    if gamma.lp_norm(1) <= tau || m == 0 {
        let x = SymMatrix::zeros(n);
        let (l1, excess) = evaluate(&x)?;
        return Ok(Recovery {
            x,
            iterations: 0,
            objective: 0.0,
            l1_residual: l1,
            l1_excess: excess,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        });
    }

    // Work with B/κ so the two consensus blocks are comparably scaled.
    let kappa = ensemble.b.row_iter().map(|r| r.norm_squared()).sum::<f64>() / m as f64;
    let bs = &ensemble.b / kappa.sqrt();
    let gs = gamma / kappa;
    let ts = tau / kappa;

    let inner = &bs * bs.transpose();
    let mut gram = inner.map(|v| v * v);
    for i in 0..m {
        gram[(i, i)] += 1.0;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("sketch Gram matrix is not positive definite"))?;
    let solve_x = |rhs: DMatrix<f64>| -> DMatrix<f64> {
        let r = SymMatrix::new(rhs).expect("square");
        let w = chol.solve(&apply_operator(&bs, &r).expect("dims"));
        r.into_matrix() - apply_adjoint(&bs, &w).into_matrix()
    };

    let rho = opts.rho;
    let ident = DMatrix::<f64>::identity(n, n);
    let mut z = DMatrix::<f64>::zeros(n, n);
    let mut u_mat = DMatrix::<f64>::zeros(n, n);
    let mut r = gs.clone();
    let mut u_vec = DVector::<f64>::zeros(m);
    let mut best: Option<Recovery> = None;
    let mut prev_obj = f64::INFINITY;

    for it in 1..=opts.max_iterations {
        let back = apply_adjoint(&bs, &(&r - &u_vec)).into_matrix();
        let x = solve_x(&z - &u_mat + back - &ident / rho);
        let bx = apply_operator(&bs, &SymMatrix::new(x.clone())?)?;

        let z_prev = std::mem::replace(&mut z, project_psd(&(&x + &u_mat)));
        let r_prev = std::mem::replace(&mut r, project_l1_ball(&(&bx + &u_vec), &gs, ts));
        u_mat += &x - &z;
        u_vec += &bx - &r;

        let primal = ((&x - &z).norm_squared() + (&bx - &r).norm_squared()).sqrt();
        let dual = rho
            * ((&z - &z_prev).norm_squared() + apply_adjoint(&bs, &(&r - &r_prev)).as_matrix().norm_squared()).sqrt();

        let candidate = SymMatrix::new(z.clone())?;
        let objective = candidate.trace();
        let (l1, excess) = evaluate(&candidate)?;
        let scale = 1.0_f64.max(z.norm()).max(gs.norm());
        let stationary = (objective - prev_obj).abs() <= opts.obj_tol * objective.abs().max(1.0);
        prev_obj = objective;
        let converged = l1 <= allowed && primal <= opts.feas_tol * scale && dual <= opts.feas_tol * scale && stationary;

        let rec = Recovery {
            x: candidate,
            iterations: it,
            objective,
            l1_residual: l1,
            l1_excess: excess,
            primal_residual: primal,
            dual_residual: dual,
            converged,
        };
        if converged {
            return Ok(rec);
        }
        let better = match &best {
            None => true,
            Some(b) => {
                let feasible = rec.l1_residual <= allowed;
                let b_feasible = b.l1_residual <= allowed;
                match (feasible, b_feasible) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => rec.objective < b.objective,
                    (false, false) => rec.l1_excess < b.l1_excess,
                }
            }
        };
        if better {
            best = Some(rec);
        }
    }
    let mut best = best.expect("at least one iteration ran");
    best.iterations = opts.max_iterations;
    Err(Error::NotConverged { best: Box::new(best) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::eigvals_sym;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| g.sample::<f64, _>(StandardNormal))
    }

    fn ensemble_for(sigma: &SymMatrix, m: usize, seed: u64) -> SketchEnsemble {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let b = gaussian(m, sigma.dim(), &mut g);
        let gamma = apply_operator(&b, sigma).unwrap();
        SketchEnsemble {
            b,
            gamma,
            n_samples: 1,
            l: 1,
            sigma2: 0.0,
        }
    }

    /// Projection by bisection on the threshold.
    fn l1_oracle(d: &DVector<f64>, radius: f64) -> DVector<f64> {
        let (mut lo, mut hi) = (0.0, d.amax());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = d.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
            if mass > radius {
                lo = mid
            } else {
                hi = mid
            }
        }
        d.map(|x| x.signum() * (x.abs() - hi).max(0.0))
    }

    #[test]
    fn l1_projection_matches_threshold_search() {
        let mut g = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..50 {
            let d = DVector::from_fn(9, |_, _| g.sample::<f64, _>(StandardNormal));
            let c = DVector::from_fn(9, |_, _| g.sample::<f64, _>(StandardNormal));
            let radius = 0.1 + trial as f64 * 0.05;
            let p = project_l1_ball(&(&d + &c), &c, radius);
            let expect = if d.lp_norm(1) <= radius {
                d.clone()
            } else {
                l1_oracle(&d, radius)
            };
            assert!((p - &c - expect).norm() < 1e-10);
        }
        let c = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(project_l1_ball(&DVector::from_vec(vec![5.0, 5.0]), &c, 0.0), c);
    }

    #[test]
    fn zero_data_recovers_zero() {
        let e = ensemble_for(&SymMatrix::zeros(4), 10, 2);
        let r = recover_covariance(&e, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.x, SymMatrix::zeros(4));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn large_radius_gives_zero() {
        let sigma = SymMatrix::from_diagonal(&[2.0, 1.0, 0.0]);
        let e = ensemble_for(&sigma, 12, 3);
        let tau = e.gamma.lp_norm(1);
        let r = recover_covariance(&e, tau, &SolverOptions::default()).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.l1_residual <= tau);
    }

    #[test]
    fn noiseless_low_rank_recovery() {
        let mut g = ChaCha8Rng::seed_from_u64(4);
        let (n, s) = (8, 2);
        let f = gaussian(n, s, &mut g);
        let sigma = SymMatrix::from_factor(&f);
        let e = ensemble_for(&sigma, 4 * n * s, 5);
        let r = recover_covariance(&e, 0.0, &SolverOptions::default()).unwrap();
        let rel = (r.x.as_matrix() - sigma.as_matrix()).norm() / sigma.frobenius_norm();
        assert!(rel <= 1e-3, "relative error {rel} after {} iterations", r.iterations);
        let min = eigvals_sym(&r.x).unwrap().last().copied().unwrap();
        assert!(min >= -1e-9 * r.x.frobenius_norm().max(1.0));
    }

    #[test]
    fn cap_reports_best_iterate() {
        let mut g = ChaCha8Rng::seed_from_u64(6);
        let sigma = SymMatrix::from_factor(&gaussian(6, 2, &mut g));
        let e = ensemble_for(&sigma, 30, 7);
        let opts = SolverOptions {
            max_iterations: 3,
            ..Default::default()
        };
        match recover_covariance(&e, 0.0, &opts) {
            Err(Error::NotConverged { best }) => {
                assert_eq!(best.iterations, 3);
                assert!(!best.converged);
                let min = eigvals_sym(&best.x).unwrap().last().copied().unwrap();
                assert!(min >= -1e-9 * best.x.frobenius_norm().max(1.0));
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
