//! Gaussian signal models, sampling, conditioning on scalar measurements and
//! the log-volume entropy used for rank-deficient covariances.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{
    eig_sym, eigvals_sym, log_volume_of_spectrum, rank_of_spectrum, EigenDecomposition, SymMatrix, DEFAULT_RANK_TOL,
};

/// `x ~ N(mean, covariance)` with a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    mean: DVector<f64>,
    covariance: SymMatrix,
    eigen: EigenDecomposition,
    rank: usize,
    rank_tol: f64,
}

impl GaussianModel {
    /// Validates that `covariance` is PSD within `rank_tol` (relative to
    /// `max(1, λ_max)`) and caches its eigendecomposition.
    pub fn new(mean: DVector<f64>, covariance: SymMatrix, rank_tol: f64) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::invalid(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        check_tol(rank_tol)?;
        let eigen = eig_sym(&covariance)?;
        let cut = rank_tol * eigen.values.first().copied().unwrap_or(0.0).max(1.0);
        if let Some(&min) = eigen.values.last() {
            if min < -cut {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
        }
        let rank = rank_of_spectrum(&eigen.values, rank_tol);
        Ok(Self {
            mean,
            covariance,
            eigen,
            rank,
            rank_tol,
        })
    }

    pub fn zero_mean(covariance: SymMatrix) -> Result<Self> {
        let n = covariance.dim();
        Self::new(DVector::zeros(n), covariance, DEFAULT_RANK_TOL)
    }

    /// Model with covariance `F Fᵀ`. PSD by construction; when `F` has no more
    /// columns than rows the eigendecomposition is computed thin, which keeps
    /// large low-rank models cheap.
    pub fn from_factor(mean: DVector<f64>, factor: &DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if mean.len() != factor.nrows() {
            return Err(Error::invalid("mean length does not match factor rows"));
        }
        check_tol(rank_tol)?;
        if factor.ncols() > factor.nrows() {
            return Self::new(mean, SymMatrix::from_factor(factor), rank_tol);
        }
        let eigen = EigenDecomposition::from_factor(factor, rank_tol)?;
        let rank = eigen.len();
        Ok(Self {
            covariance: SymMatrix::from_factor(factor),
            mean,
            eigen,
            rank,
            rank_tol,
        })
    }

    /// Fails unless the numeric rank equals `s`.
    pub fn with_declared_rank(self, s: usize) -> Result<Self> {
        if self.rank != s {
            return Err(Error::invalid(format!(
                "declared rank {s} but covariance has numeric rank {}",
                self.rank
            )));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Eigenvalues strictly above tolerance, descending.
    pub fn support_values(&self) -> &[f64] {
        &self.eigen.values[..self.support_len()]
    }

    fn support_len(&self) -> usize {
        let cut = self.rank_tol * self.eigen.values.first().copied().unwrap_or(0.0).max(1.0);
        self.eigen.values.iter().take_while(|&&v| v > cut).count()
    }

    /// `U √Λ` over the non-zero spectrum, so that `covariance ≈ F Fᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        let k = self.support_len();
        DMatrix::from_fn(self.dim(), k, |i, j| {
            self.eigen.vectors[(i, j)] * self.eigen.values[j].sqrt()
        })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("rank tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Draws `mean + U √Λ z` with `z` standard normal over the non-zero
/// eigen-directions. Eigenvalues within tolerance of zero are treated as zero.
pub fn sample_signal<R: Rng + ?Sized>(model: &GaussianModel, rng: &mut R) -> DVector<f64> {
    let f = model.factor();
    let z = DVector::from_fn(f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    model.mean() + f * z
}

/// Posterior state of the signal: mean `θ` and covariance `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub theta: DVector<f64>,
    pub gamma: SymMatrix,
}

impl GaussianBelief {
    pub fn new(theta: DVector<f64>, gamma: SymMatrix) -> Result<Self> {
        if theta.len() != gamma.dim() {
            return Err(Error::invalid("belief mean and covariance dimensions differ"));
        }
        Ok(Self { theta, gamma })
    }

    pub fn from_model(model: &GaussianModel) -> Self {
        Self {
            theta: model.mean().clone(),
            gamma: model.covariance().clone(),
        }
    }
}

/// Conditions the belief on `y = aᵀx + w`, `w ~ N(0, σ²)`:
///
/// ```text
/// θ' = θ + Γa (y − aᵀθ) / (aᵀΓa + σ²)
/// Γ' = Γ − Γa aᵀΓ / (aᵀΓa + σ²)
/// ```
///
/// For `a = √β u` with `Γu = λu` the denominator is `βλ + σ²` and only the
/// eigenvalue on `u` changes, to `λσ²/(βλ + σ²)`.
pub fn posterior_update(belief: &GaussianBelief, a: &DVector<f64>, y: f64, sigma2: f64) -> Result<GaussianBelief> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be positive, got {sigma2}")));
    }
    if a.len() != belief.theta.len() {
        return Err(Error::invalid("measurement vector has the wrong dimension"));
    }
    if a.iter().any(|v| !v.is_finite()) || !y.is_finite() {
        return Err(Error::invalid("measurement is not finite"));
    }
    let g = belief.gamma.mul_vec(a);
    let denom = a.dot(&g) + sigma2;
    let innovation = y - a.dot(&belief.theta);
    Ok(GaussianBelief {
        theta: &belief.theta + &g * (innovation / denom),
        gamma: belief.gamma.rank_one_downdate(&g, 1.0 / denom),
    })
}

/// Low-rank entropy `ln((2π e)^{s/2} Vol)` with `Vol² = Π λ_i` over the
/// non-zero eigenvalues, i.e. `(1/2) ln((2π e)^s Π λ_i)`. On a full-rank
/// covariance this is the differential entropy of the Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedEntropy {
    pub value: f64,
    /// Number of eigenvalues above tolerance.
    pub support: usize,
    /// Fewer than `s` eigenvalues were non-zero; the prefactor used `support`.
    pub rank_deficient: bool,
}

pub fn modified_entropy(cov: &SymMatrix, s: usize, tol: f64) -> Result<ModifiedEntropy> {
    modified_entropy_of_spectrum(&eigvals_sym(cov)?, s, tol)
}

/// [`modified_entropy`] on a spectrum sorted descending.
pub fn modified_entropy_of_spectrum(values: &[f64], s: usize, tol: f64) -> Result<ModifiedEntropy> {
    let (log_vol, support) = log_volume_of_spectrum(values, tol)?;
    let dims = s.min(support);
    Ok(ModifiedEntropy {
        value: 0.5 * (dims as f64 * (2.0 * PI * E).ln() + log_vol),
        support,
        rank_deficient: support < s,
    })
}

/// Factor `G` of the sample covariance `(1/L) Σ x̃_j x̃_jᵀ` of `l` draws from a
/// zero-mean `model`, so that `Σ̂ = G Gᵀ` stays inside `range(Σ)`.
///
/// With `Σ = F Fᵀ` and `x̃_j = F z_j`, `Σ̂ = F W Fᵀ` where `W = (1/L) Σ z_j z_jᵀ`.
pub fn sample_covariance_factor<R: Rng + ?Sized>(model: &GaussianModel, l: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if l == 0 {
        return Err(Error::invalid("sample covariance needs at least one sample"));
    }
    let f = model.factor();
    let s = f.ncols();
    let mut z = DMatrix::zeros(s, l);
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    if l < s {
        return Ok(f * z / (l as f64).sqrt());
    }
    let w = (&z * z.transpose()) / l as f64;
    let chol = w
        .cholesky()
        .ok_or_else(|| Error::invalid("sample second-moment matrix is singular"))?;
    Ok(f * chol.l())
}
