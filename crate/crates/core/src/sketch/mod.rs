//! Covariance sketching: quadratic sketches `γ_i = (1/N) Σ_j (b_iᵀx̃_j + w_ij)²`
//! of `N` signal copies, the linear operator `[B(X)]_i = b_iᵀ X b_i` they
//! measure, and trace-minimising recovery of the covariance.

mod io;
mod solver;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::ceil_count;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::numlin::SymMatrix;

pub use io::{load_ensemble, save_ensemble, sidecar_path, EnsembleMeta, ENSEMBLE_FORMAT_VERSION};
pub use solver::{project_l1_ball, recover_covariance, Recovery, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SketchEnsemble {
    /// Sketching vectors as rows, `M × n`.
    pub b: DMatrix<f64>,
    /// `γ`, length `M`.
    pub gamma: DVector<f64>,
    /// Signal copies `N`.
    pub n_samples: usize,
    /// Noisy repetitions `L` averaged per sketch.
    pub l: usize,
    pub sigma2: f64,
}

impl SketchEnsemble {
    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Pieces of `η = γ − B(Σ)` from one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchNoise {
    /// `Σ̂_N = (1/N) Σ x̃_j x̃_jᵀ`
    pub sample_covariance: SymMatrix,
    /// `z_i = (1/N) Σ_j w_ij b_iᵀx̃_j`
    pub cross: DVector<f64>,
    /// `(1/N) Σ_j w_ij²` per sketch; summed over `i` this is the `w` term.
    pub noise_energy: DVector<f64>,
}

impl SketchNoise {
    pub fn w_total(&self) -> f64 {
        self.noise_energy.sum()
    }
}

/// Draws an ensemble: `b_i ~ N(0, I)`, `x̃_j` i.i.d. from `truth`,
/// `w_ij ~ N(0, σ²/L)`.
pub fn generate_sketches<R: Rng + ?Sized>(
    truth: &GaussianModel,
    m: usize,
    n_samples: usize,
    l: usize,
    sigma2: f64,
    rng: &mut R,
) -> Result<SketchEnsemble> {
    generate_sketches_with_noise(truth, m, n_samples, l, sigma2, rng).map(|(e, _)| e)
}

/// [`generate_sketches`] that also returns the decomposition of `η`.
///
/// Sketching vectors and signal copies come from `rng`; the noise of row `i`
/// comes from its own stream so rows can be generated in parallel with
/// results that do not depend on the thread count.
pub fn generate_sketches_with_noise<R: Rng + ?Sized>(
    truth: &GaussianModel,
    m: usize,
    n_samples: usize,
    l: usize,
    sigma2: f64,
    rng: &mut R,
) -> Result<(SketchEnsemble, SketchNoise)> {
    if m == 0 || n_samples == 0 || l == 0 {
        return Err(Error::invalid("M, N and L must all be positive"));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    let n = truth.dim();
    let mut b = DMatrix::<f64>::zeros(m, n);
    for v in b.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    // x̃_j = μ + F z_j; keep z as rows of an N × s matrix.
    let f = truth.factor();
    let s = f.ncols();
    let mut z = DMatrix::<f64>::zeros(n_samples, s);
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let noise_seed: u64 = rng.random();
    let noise_sd = (sigma2 / l as f64).sqrt();

    // Row i needs b_iᵀx̃_j = b_iᵀμ + (Fᵀb_i)ᵀ z_j for every j.
    let bf = &b * &f;
    let bmu = &b * truth.mean();
    let rows: Vec<(f64, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut noise = ChaCha20Rng::seed_from_u64(noise_seed);
            noise.set_stream(i as u64);
            let proj = &z * bf.row(i).transpose();
            let (mut sq, mut cross, mut energy) = (0.0, 0.0, 0.0);
            for j in 0..n_samples {
                let w = noise_sd * noise.sample::<f64, _>(StandardNormal);
                let clean = bmu[i] + proj[j];
                let y = clean + w;
                sq += y * y;
                cross += w * clean;
                energy += w * w;
            }
            let inv = 1.0 / n_samples as f64;
            (sq * inv, cross * inv, energy * inv)
        })
        .collect();

    let gamma = DVector::from_iterator(m, rows.iter().map(|r| r.0));
    let second = &z.transpose() * &z / n_samples as f64;
    let mut sample_cov = SymMatrix::congruence(&f, &SymMatrix::new(second)?);
    let mu = truth.mean();
    if mu.iter().any(|v| *v != 0.0) {
        // Second moment about zero: add μμᵀ plus the cross terms.
        let zbar = z.row_mean().transpose();
        let fz = &f * zbar;
        let extra = mu * mu.transpose() + mu * fz.transpose() + fz * mu.transpose();
        sample_cov = SymMatrix::new(sample_cov.into_matrix() + extra)?;
    }
    let noise = SketchNoise {
        sample_covariance: sample_cov,
        cross: DVector::from_iterator(m, rows.iter().map(|r| r.1)),
        noise_energy: DVector::from_iterator(m, rows.iter().map(|r| r.2)),
    };
    Ok((
        SketchEnsemble {
            b,
            gamma,
            n_samples,
            l,
            sigma2,
        },
        noise,
    ))
}

/// `[B(X)]_i = b_iᵀ X b_i` for the rows `b_i` of `b`.
pub fn apply_operator(b: &DMatrix<f64>, x: &SymMatrix) -> Result<DVector<f64>> {
    if b.ncols() != x.dim() {
        return Err(Error::invalid(format!(
            "sketch vectors have length {} but X is {}×{}",
            b.ncols(),
            x.dim(),
            x.dim()
        )));
    }
    let bx = b * x.as_matrix();
    Ok(DVector::from_fn(b.nrows(), |i, _| bx.row(i).dot(&b.row(i))))
}

/// Adjoint `Bᵀ(v) = Σ_i v_i b_i b_iᵀ`.
pub fn apply_adjoint(b: &DMatrix<f64>, v: &DVector<f64>) -> SymMatrix {
    let mut scaled = b.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= v[i];
    }
    SymMatrix::new(b.transpose() * scaled).expect("square")
}

/// Absolute constants of the sketching guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConstants {
    pub c: f64,
    pub c0: f64,
    pub c1: f64,
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
}

impl Default for SketchConstants {
    fn default() -> Self {
        Self {
            c: 4.0,
            c0: 1.0,
            c1: 1.0,
            big_c1: 1.0,
            big_c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub m: usize,
    pub n_samples: u64,
    pub l: u64,
    pub tau: f64,
    pub consts: SketchConstants,
}

impl SketchParams {
    /// `M > c₀ n s`.
    pub fn validate(&self, n: usize, s: usize) -> Result<()> {
        if (self.m as f64) <= self.consts.c0 * (n * s) as f64 {
            return Err(Error::invalid(format!(
                "M = {} must exceed c0·n·s = {}",
                self.m,
                self.consts.c0 * (n * s) as f64
            )));
        }
        Ok(())
    }
}

/// Sketch sizes that guarantee `‖Σ̂ − Σ‖ ≤ δ₀`:
///
/// ```text
/// M = cns,  τ = cnsδ₀/C₂
/// N ≥ 4√n tr(Σ) (36c²n⁴s²‖Σ‖/τ² + 24cn²s/τ)
/// L ≥ max{csσ²/(4n‖Σ‖), σ²/√(2 tr(Σ)‖Σ‖csn³), 6cnsσ²/τ}
/// ```
///
/// Integer outputs are rounded up; `L` is at least 1.
pub fn sketch_params(
    n: usize,
    s: usize,
    trace_sigma: f64,
    norm_sigma: f64,
    delta0: f64,
    sigma2: f64,
    consts: SketchConstants,
) -> Result<SketchParams> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if n == 0 || s == 0 {
        return Err(Error::invalid("n and s must be positive"));
    }
    if !(positive(trace_sigma) && positive(norm_sigma) && positive(delta0)) {
        return Err(Error::invalid("tr(Σ), ‖Σ‖ and δ₀ must be positive"));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid("sigma2 must be non-negative"));
    }
    let k = &consts;
    if ![k.c, k.c0, k.c1, k.big_c1, k.big_c2].into_iter().all(positive) {
        return Err(Error::invalid("sketch constants must be positive"));
    }
    let (nf, sf, c) = (n as f64, s as f64, k.c);
    let cns = c * nf * sf;
    let tau = cns * delta0 / k.big_c2;
    let n_raw = 4.0
        * nf.sqrt()
        * trace_sigma
        * (36.0 * c * c * nf.powi(4) * sf * sf * norm_sigma / (tau * tau) + 24.0 * c * nf * nf * sf / tau);
    let l_raw = [
        c * sf * sigma2 / (4.0 * nf * norm_sigma),
        sigma2 / (2.0 * trace_sigma * norm_sigma * c * sf * nf.powi(3)).sqrt(),
        6.0 * cns * sigma2 / tau,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(SketchParams {
        m: ceil_count(cns) as usize,
        n_samples: ceil_count(n_raw),
        l: ceil_count(l_raw).max(1),
        tau,
        consts,
    })
}
