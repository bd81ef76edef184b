//! Shared state machine behind every sensing strategy.
//!
//! Posterior updates never enlarge the range of a covariance, so all of
//! `Σ̂_k`, `Σ_k` and `E_k` live in `range(Σ̂) + range(Σ)` for the whole run.
//! The engine fixes an orthonormal basis `V` of that subspace once and keeps
//! only the `r × r` cores `VᵀΣ̂_kV` and `VᵀΣ_kV`. Every update is exact in
//! this representation: for any `a`, `Σa = V C Vᵀa`. When the subspace is the
//! whole space `V` is the identity and nothing is rotated.

use nalgebra::{DMatrix, DVector};

use super::{
    CovarianceSnapshot, MeasurementRecord, PolicyKind, SensingConfig, SensingTrace, StepRecord, StopReason, Thresholds,
    TraceContext,
};
use crate::error::{Error, Result};
use crate::gaussian::{modified_entropy_of_spectrum, GaussianModel};
use crate::numlin::{eig_sym, eigvals_sym, fix_sign, rank_of_spectrum, EigenDecomposition, SymMatrix};

/// Directions whose share of `‖[F̂ F]‖²_F` falls below this are outside the basis.
const BASIS_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub(crate) struct Subspace {
    n: usize,
    /// `None` means the identity on `R^n`.
    basis: Option<DMatrix<f64>>,
}

impl Subspace {
    pub(crate) fn spanning(models: &[&GaussianModel]) -> Result<Self> {
        let n = models[0].dim();
        let factors: Vec<DMatrix<f64>> = models.iter().map(|m| m.factor()).collect();
        let cols: usize = factors.iter().map(|f| f.ncols()).sum();
        if cols >= n {
            return Ok(Self { n, basis: None });
        }
        let mut stacked = DMatrix::zeros(n, cols);
        let mut at = 0;
        for f in &factors {
            stacked.columns_mut(at, f.ncols()).copy_from(f);
            at += f.ncols();
        }
        let scale = stacked.norm();
        if scale > 0.0 {
            stacked /= scale;
        }
        let eig = EigenDecomposition::from_factor(&stacked, BASIS_TOL)?;
        if eig.len() == n {
            return Ok(Self { n, basis: None });
        }
        Ok(Self {
            n,
            basis: Some(eig.vectors),
        })
    }

    pub(crate) fn reduced_dim(&self) -> usize {
        self.basis.as_ref().map_or(self.n, |v| v.ncols())
    }

    fn project(&self, a: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            None => a.clone(),
            Some(v) => v.tr_mul(a),
        }
    }

    fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            None => c.clone(),
            Some(v) => v * c,
        }
    }

    fn compress(&self, s: &SymMatrix) -> SymMatrix {
        match &self.basis {
            None => s.clone(),
            Some(v) => SymMatrix::new(v.tr_mul(&(s.as_matrix() * v))).expect("square"),
        }
    }

    fn expand(&self, c: &SymMatrix) -> SymMatrix {
        match &self.basis {
            None => c.clone(),
            Some(v) => SymMatrix::congruence(v, c),
        }
    }
}

/// Spectral summary of one core matrix.
struct CoreStats {
    trace: f64,
    norm: f64,
    rank: usize,
    entropy: f64,
}

pub(crate) struct Engine<'a> {
    space: Subspace,
    assumed: SymMatrix,
    truth: SymMatrix,
    theta: DVector<f64>,
    signal: &'a DVector<f64>,
    thr: Thresholds,
    sigma2: f64,
    s: usize,
    rank_tol: f64,
    record: bool,
    context: TraceContext,
    steps: Vec<StepRecord>,
    snapshots: Vec<CovarianceSnapshot>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        assumed: &GaussianModel,
        truth: &GaussianModel,
        cfg: &SensingConfig,
        signal: &'a DVector<f64>,
    ) -> Result<Self> {
        let n = truth.dim();
        if assumed.dim() != n || signal.len() != n {
            return Err(Error::invalid(format!(
                "dimension mismatch: assumed {}, truth {}, signal {}",
                assumed.dim(),
                n,
                signal.len()
            )));
        }
        let thr = cfg.thresholds(n)?;
        let space = Subspace::spanning(&[assumed, truth])?;
        let mut engine = Self {
            assumed: space.compress(assumed.covariance()),
            truth: space.compress(truth.covariance()),
            space,
            theta: assumed.mean().clone(),
            signal,
            thr,
            sigma2: cfg.sigma2,
            s: truth.rank(),
            rank_tol: cfg.rank_tol,
            record: cfg.record_covariances,
            context: TraceContext {
                n,
                s: truth.rank(),
                sigma2: cfg.sigma2,
                epsilon: cfg.epsilon,
                p: cfg.p,
                chi2: thr.chi2,
                threshold: thr.stop,
                target: thr.target,
                power_policy: cfg.power_policy,
                delta0: 0.0,
                trace_assumed0: 0.0,
                trace_truth0: 0.0,
                norm_assumed0: 0.0,
                norm_truth0: 0.0,
                rank_assumed0: 0,
                rank_truth0: 0,
                entropy_assumed0: 0.0,
                entropy_truth0: 0.0,
                error0: 0.0,
            },
            steps: Vec::new(),
            snapshots: Vec::new(),
        };
        let a = engine.stats(&engine.assumed)?;
        let t = engine.stats(&engine.truth)?;
        let delta0 = engine.delta()?;
        let error0 = (&engine.theta - engine.signal).norm();
        let ctx = &mut engine.context;
        ctx.trace_assumed0 = a.trace;
        ctx.norm_assumed0 = a.norm;
        ctx.norm_truth0 = t.norm;
        ctx.rank_assumed0 = a.rank;
        ctx.entropy_assumed0 = a.entropy;
        ctx.trace_truth0 = t.trace;
        ctx.rank_truth0 = t.rank;
        ctx.entropy_truth0 = t.entropy;
        ctx.delta0 = delta0;
        ctx.error0 = error0;
        engine.snapshot();
        Ok(engine)
    }

    pub(crate) fn thresholds(&self) -> &Thresholds {
        &self.thr
    }

    pub(crate) fn steps_taken(&self) -> usize {
        self.steps.len()
    }

    pub(crate) fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Full eigendecomposition of the assumed core, lifted to `R^n`. Only the
    /// first `reduced_dim` eigenpairs exist; the rest of the spectrum is zero.
    pub(crate) fn assumed_eigen(&self) -> Result<EigenDecomposition> {
        let core = eig_sym(&self.assumed)?;
        let mut vectors = DMatrix::zeros(self.context.n, core.len());
        for j in 0..core.len() {
            let mut u = self.space.lift(&core.vector(j));
            u.normalize_mut();
            fix_sign(&mut u);
            vectors.set_column(j, &u);
        }
        Ok(EigenDecomposition {
            values: core.values,
            vectors,
        })
    }

    /// Largest assumed eigenvalue with its sign-fixed unit eigenvector.
    pub(crate) fn assumed_top(&self) -> Result<Option<(f64, DVector<f64>)>> {
        if self.space.reduced_dim() == 0 {
            return Ok(None);
        }
        Ok(self.assumed_eigen()?.top())
    }

    /// Assumed covariance times `a`, i.e. the gain direction for `a`.
    pub(crate) fn assumed_apply(&self, a: &DVector<f64>) -> DVector<f64> {
        self.space.lift(&self.assumed.mul_vec(&self.space.project(a)))
    }

    /// `Σ̂ Aᵀ` restricted to the basis, for joint estimators.
    pub(crate) fn project(&self, a: &DVector<f64>) -> DVector<f64> {
        self.space.project(a)
    }

    pub(crate) fn assumed_core(&self) -> &SymMatrix {
        &self.assumed
    }

    pub(crate) fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        self.space.lift(c)
    }

    /// Takes `y = aᵀx + σ z` with `a = √β u` and conditions both covariances
    /// and the assumed mean on it.
    pub(crate) fn measure(&mut self, direction: DVector<f64>, beta: f64, lambda_hat: f64, z: f64) -> Result<f64> {
        let a = &direction * beta.sqrt();
        let y = a.dot(self.signal) + self.sigma2.sqrt() * z;
        let b = self.space.project(&a);

        let g = self.assumed.mul_vec(&b);
        let denom = b.dot(&g) + self.sigma2;
        let innovation = y - a.dot(&self.theta);
        self.theta += self.space.lift(&g) * (innovation / denom);
        self.assumed = self.assumed.rank_one_downdate(&g, 1.0 / denom);

        let g = self.truth.mul_vec(&b);
        let denom = b.dot(&g) + self.sigma2;
        self.truth = self.truth.rank_one_downdate(&g, 1.0 / denom);

        let sa = self.stats(&self.assumed)?;
        let st = self.stats(&self.truth)?;
        let step = self.steps.len() + 1;
        self.steps.push(StepRecord {
            measurement: MeasurementRecord {
                step,
                direction: direction.as_slice().to_vec(),
                beta,
                y,
                lambda_hat,
            },
            delta: self.delta()?,
            trace_assumed: sa.trace,
            trace_truth: st.trace,
            norm_assumed: sa.norm,
            norm_truth: st.norm,
            rank_assumed: sa.rank,
            rank_truth: st.rank,
            entropy_assumed: sa.entropy,
            entropy_truth: st.entropy,
            error: (&self.theta - self.signal).norm(),
        });
        self.snapshot();
        Ok(y)
    }

    pub(crate) fn finish(self, policy: PolicyKind, stop: StopReason) -> SensingTrace {
        let estimate = self.theta.clone();
        self.finish_with_estimate(policy, stop, estimate)
    }

    pub(crate) fn finish_with_estimate(
        self,
        policy: PolicyKind,
        stop: StopReason,
        estimate: DVector<f64>,
    ) -> SensingTrace {
        SensingTrace {
            policy,
            context: self.context,
            steps: self.steps,
            error: (&estimate - self.signal).norm(),
            signal_norm: self.signal.norm(),
            signal: self.signal.as_slice().to_vec(),
            estimate: estimate.as_slice().to_vec(),
            stop,
            snapshots: self.snapshots,
        }
    }

    fn stats(&self, core: &SymMatrix) -> Result<CoreStats> {
        let values = eigvals_sym(core)?;
        let entropy = modified_entropy_of_spectrum(&values, self.s, self.rank_tol)?;
        Ok(CoreStats {
            trace: core.trace(),
            norm: values.first().map_or(0.0, |v| v.max(0.0)),
            rank: rank_of_spectrum(&values, self.rank_tol),
            entropy: entropy.value,
        })
    }

    fn delta(&self) -> Result<f64> {
        let values = eigvals_sym(&self.assumed.sub(&self.truth))?;
        Ok(values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    fn snapshot(&mut self) {
        if self.record {
            self.snapshots.push(CovarianceSnapshot {
                assumed: self.space.expand(&self.assumed),
                truth: self.space.expand(&self.truth),
            });
        }
    }
}
