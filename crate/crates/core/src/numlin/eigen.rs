use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::{fix_sign, SymMatrix, SIGN_EPS};
use crate::error::{Error, Result};

/// Sweeps stop once the off-diagonal Frobenius norm drops below this fraction
/// of `‖S‖_F`.
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
///
/// `vectors` is `n × k`. A full decomposition has `k = n`; a thin one (built
/// from a low-rank factor) keeps only the non-zero part of the spectrum, the
/// rest being implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.dim()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Largest eigenvalue and its eigenvector; `None` for an empty thin decomposition.
    pub fn top(&self) -> Option<(f64, DVector<f64>)> {
        (!self.is_empty()).then(|| (self.values[0], self.vector(0)))
    }

    /// `U Λ Uᵀ`
    pub fn reconstruct(&self) -> SymMatrix {
        let scaled = DMatrix::from_fn(self.dim(), self.len(), |i, j| self.vectors[(i, j)] * self.values[j]);
        SymMatrix::symmetrized(scaled * self.vectors.transpose())
    }

    /// Eigen-decomposition of `F Fᵀ` from an `n × r` factor with `r ≤ n`,
    /// keeping eigenvalues above `tol · max(1, λ_max)`. Costs `O(n r²)` instead
    /// of a dense `O(n³)` solve.
    pub fn from_factor(f: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let (n, r) = f.shape();
        if r > n {
            return Err(Error::invalid(format!(
                "thin factor must have at most as many columns as rows ({r} > {n})"
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("factor has non-finite entries"));
        }
        if r == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: DMatrix::zeros(n, 0),
            });
        }
        let qr = f.clone().qr();
        let q = qr.q();
        let rr = qr.r();
        let core = SymMatrix::symmetrized(&rr * rr.transpose());
        let small = eig_sym(&core)?;
        let cut = tol * small.values[0].max(1.0);
        let keep = small.values.iter().take_while(|&&v| v > cut).count();
        let mut vectors = &q * small.vectors.columns(0, keep);
        for mut col in vectors.column_iter_mut() {
            let mut v = col.clone_owned();
            v.normalize_mut();
            fix_sign(&mut v);
            col.copy_from(&v);
        }
        Ok(Self {
            values: small.values[..keep].to_vec(),
            vectors,
        })
    }
}

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Output is deterministic: each eigenvector's first component with magnitude
/// above `1e-12` is positive, eigenvalues are sorted descending and exact ties
/// are ordered by the position of that first significant component.
pub fn eig_sym(s: &SymMatrix) -> Result<EigenDecomposition> {
    let (values, vectors) = jacobi(s, true)?;
    let n = s.dim();
    let mut vectors = vectors.expect("vectors requested");
    for mut col in vectors.column_iter_mut() {
        let mut v = col.clone_owned();
        fix_sign(&mut v);
        col.copy_from(&v);
    }
    let lead = |j: usize| (0..n).position(|i| vectors[(i, j)].abs() > SIGN_EPS).unwrap_or(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match values[b].total_cmp(&values[a]) {
        Ordering::Equal => lead(a).cmp(&lead(b)),
        o => o,
    });
    Ok(EigenDecomposition {
        values: order.iter().map(|&j| values[j]).collect(),
        vectors: DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]),
    })
}

/// Eigenvalues only, sorted descending.
pub fn eigvals_sym(s: &SymMatrix) -> Result<Vec<f64>> {
    let (mut values, _) = jacobi(s, false)?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

fn jacobi(s: &SymMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    if !s.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = s.dim();
    let mut a = s.as_matrix().clone();
    let mut v = want_vectors.then(|| DMatrix::<f64>::identity(n, n));
    let target = OFF_DIAGONAL_TOL * s.frobenius_norm();

    // Column-major storage: element (i, j) lives at i + j * n.
    let a = a.as_mut_slice();
    for sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(a, n) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p + q * n];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p + p * n];
                let aqq = a[q + q * n];
                // Rutishauser: drop elements that can no longer move the diagonal.
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p + q * n] = 0.0;
                    a[q + p * n] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k + p * n];
                    let akq = a[k + q * n];
                    let np = c * akp - sn * akq;
                    let nq = sn * akp + c * akq;
                    a[k + p * n] = np;
                    a[p + k * n] = np;
                    a[k + q * n] = nq;
                    a[q + k * n] = nq;
                }
                a[p + p * n] = app - t * apq;
                a[q + q * n] = aqq + t * apq;
                a[p + q * n] = 0.0;
                a[q + p * n] = 0.0;
                if let Some(v) = v.as_mut() {
                    let (cp, cq) = {
                        let vs = v.as_mut_slice();
                        let (lo, hi) = vs.split_at_mut(q * n);
                        (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
                    };
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        let (vp, vq) = (*x, *y);
                        *x = c * vp - sn * vq;
                        *y = sn * vp + c * vq;
                    }
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i + i * n]).collect();
    Ok((values, v))
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            sum += a[i + j * n] * a[i + j * n];
        }
    }
    (2.0 * sum).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::new(&m + m.transpose()).unwrap()
    }

    /// Classical (largest pivot) Jacobi, run until the off-diagonal part is
    /// exactly negligible. Slow, simple, and independent of the cyclic sweep.
    fn classical_jacobi_values(s: &SymMatrix) -> Vec<f64> {
        let n = s.dim();
        let mut a = s.as_matrix().clone();
        for _ in 0..100_000 {
            let (mut p, mut q, mut best) = (0, 1, 0.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if a[(i, j)].abs() > best {
                        best = a[(i, j)].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if best < 1e-300 {
                break;
            }
            let phi = 0.5 * (2.0 * a[(p, q)]).atan2(a[(q, q)] - a[(p, p)]);
            let (sn, c) = phi.sin_cos();
            let mut r = DMatrix::<f64>::identity(n, n);
            r[(p, p)] = c;
            r[(q, q)] = c;
            r[(p, q)] = sn;
            r[(q, p)] = -sn;
            a = r.transpose() * a * &r;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
        }
        let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        d.sort_by(|x, y| y.total_cmp(x));
        d
    }

    fn check_invariants(s: &SymMatrix, e: &EigenDecomposition) {
        let n = s.dim();
        let recon = e.reconstruct().sub(s).frobenius_norm();
        assert!(recon <= 1e-9 * s.frobenius_norm().max(1.0), "recon {recon}");
        let gram = e.vectors.transpose() * &e.vectors - DMatrix::<f64>::identity(n, n);
        assert!(gram.norm() <= 1e-9, "orthonormality {}", gram.norm());
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_gives_identity_vectors() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.vectors, DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_is_sorted() {
        let e = eig_sym(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        let expect = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert_eq!(e.vectors, expect);
    }

    #[test]
    fn random_matches_classical_jacobi_oracle() {
        for seed in 0..5 {
            let s = random_sym(8, seed);
            let e = eig_sym(&s).unwrap();
            check_invariants(&s, &e);
            let oracle = classical_jacobi_values(&s);
            for (a, b) in e.values.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-11, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn larger_matrices_hold_invariants() {
        for (n, seed) in [(64, 1), (150, 2)] {
            let s = random_sym(n, seed).scale(1e3);
            check_invariants(&s, &eig_sym(&s).unwrap());
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        let s = SymMatrix(m);
        assert!(matches!(eig_sym(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn thin_factor_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let dense = SymMatrix::from_factor(&f);
        let thin = EigenDecomposition::from_factor(&f, 1e-12).unwrap();
        let full = eig_sym(&dense).unwrap();
        assert_eq!(thin.len(), 3);
        for k in 0..3 {
            assert!((thin.values[k] - full.values[k]).abs() < 1e-12);
            assert!((thin.vector(k) - full.vector(k)).norm() < 1e-9);
        }
        assert!(thin.reconstruct().sub(&dense).frobenius_norm() < 1e-12);
    }

    #[test]
    fn deterministic_output() {
        let s = random_sym(10, 3);
        assert_eq!(eig_sym(&s).unwrap(), eig_sym(&s).unwrap());
    }
}
