//! Dense symmetric linear algebra and the special functions the rest of the
//! crate leans on.

mod eigen;
mod special;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eigen::{eig_sym, eigvals_sym, EigenDecomposition};
pub use special::{chi2_cdf, chi2_quantile};

/// Default relative tolerance for deciding that an eigenvalue is zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Components with magnitude at or below this are ignored when fixing
/// eigenvector signs.
pub const SIGN_EPS: f64 = 1e-12;

/// A real symmetric matrix. Entries `(i, j)` and `(j, i)` are bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, replacing it with `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("rows do not form a square matrix"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `v vᵀ`
    pub fn outer(v: &DVector<f64>) -> Self {
        Self::symmetrized(v * v.transpose())
    }

    /// `F Fᵀ` for an `n × r` factor.
    pub fn from_factor(f: &DMatrix<f64>) -> Self {
        Self::symmetrized(f * f.transpose())
    }

    /// `V C Vᵀ` for orthonormal-column `V` (`n × r`) and symmetric `C` (`r × r`).
    pub fn congruence(v: &DMatrix<f64>, c: &SymMatrix) -> Self {
        Self::symmetrized(v * &c.0 * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// `vᵀ S v`
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    /// `S − α g gᵀ`, the shape of every rank-one posterior update.
    pub fn rank_one_downdate(&self, g: &DVector<f64>, alpha: f64) -> SymMatrix {
        let mut m = self.0.clone();
        m.ger(-alpha, g, g, 1.0);
        Self::symmetrized(m)
    }

    /// `Qᵀ S Q` for a square `Q`.
    pub fn conjugate(&self, q: &DMatrix<f64>) -> SymMatrix {
        Self::symmetrized(q.transpose() * &self.0 * q)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        let n = s.dim();
        (0..n).map(|i| (0..n).map(|j| s.get(i, j)).collect()).collect()
    }
}

/// Largest absolute eigenvalue.
pub fn spectral_norm(s: &SymMatrix) -> Result<f64> {
    let values = eigvals_sym(s)?;
    Ok(values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Scale used by every relative tolerance in the crate: `max(1, λ_max)`.
fn tol_scale(values: &[f64]) -> f64 {
    values.first().copied().unwrap_or(0.0).max(1.0)
}

/// Number of eigenvalues with `|λ| > tol · max(1, λ_max)`.
pub fn numeric_rank(s: &SymMatrix, tol: f64) -> Result<usize> {
    let values = eigvals_sym(s)?;
    Ok(rank_of_spectrum(&values, tol))
}

/// [`numeric_rank`] on an already computed spectrum (sorted descending).
pub fn rank_of_spectrum(values: &[f64], tol: f64) -> usize {
    let cut = tol * tol_scale(values);
    values.iter().filter(|v| v.abs() > cut).count()
}

/// Natural log of the product of the non-zero eigenvalues, i.e. the log
/// volume of the covariance ellipsoid on its own support. Returns `-inf` when
/// the matrix has no eigenvalue above tolerance.
pub fn ellipsoid_volume_log(s: &SymMatrix, tol: f64) -> Result<f64> {
    let values = eigvals_sym(s)?;
    log_volume_of_spectrum(&values, tol).map(|(v, _)| v)
}

/// Log volume and the number of eigenvalues that entered the product.
pub fn log_volume_of_spectrum(values: &[f64], tol: f64) -> Result<(f64, usize)> {
    let cut = tol * tol_scale(values);
    if let Some(&min) = values.last() {
        if min < -cut {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    let kept: Vec<f64> = values.iter().copied().filter(|&v| v > cut).collect();
    if kept.is_empty() {
        return Ok((f64::NEG_INFINITY, 0));
    }
    Ok((kept.iter().map(|v| v.ln()).sum(), kept.len()))
}

/// Flips `v` so its first component with magnitude above [`SIGN_EPS`] is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Orthonormal basis for the column space of `m` (thin Householder QR).
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}
