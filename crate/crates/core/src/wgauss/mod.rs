//! Wrapped Gaussian distributions `WG(p; μ, Σ)`: the push-forward of
//! `N(μ, Σ)` on `ℝⁿ`, `n = d(d+1)/2`, through `Exp_p ∘ Vect_p⁻¹`.

mod jacobian;
mod transforms;

pub use jacobian::{jacobian_det, log_jacobian_det, log_jacobian_from_eigenvalues, log_pair_factor, EPS_EIG};
pub use transforms::{
    clt_statistic, clt_statistic_power, congruence_transform, standardize_map, tangent_scale,
    tangent_translate, Direction,
};

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::airm::{coord_len, nu_coords, BasePoint};
use crate::error::{Error, Result};
use crate::symmat::SpdMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovKind {
    Full,
    Diagonal,
}

/// Covariance of the tangent-space normal.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Full(SpdMat),
    /// Positive variances.
    Diagonal(DVector<f64>),
}

impl CovSpec {
    pub fn full(m: &DMatrix<f64>) -> Result<Self> {
        Ok(CovSpec::Full(SpdMat::from_matrix(m)?))
    }

    pub fn diagonal(v: DVector<f64>) -> Result<Self> {
        let s = CovSpec::Diagonal(v);
        s.validate()?;
        Ok(s)
    }

    pub fn identity(n: usize) -> Self {
        CovSpec::Full(SpdMat::identity(n))
    }

    pub fn kind(&self) -> CovKind {
        match self {
            CovSpec::Full(_) => CovKind::Full,
            CovSpec::Diagonal(_) => CovKind::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovSpec::Full(s) => s.dim(),
            CovSpec::Diagonal(v) => v.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovSpec::Full(s) => {
                if !s.as_sym().is_finite() {
                    return Err(Error::InvalidInput("covariance has non-finite entries".into()));
                }
            }
            CovSpec::Diagonal(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidInput("empty diagonal covariance".into()));
                }
                if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "diagonal covariance entry {bad} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            CovSpec::Full(s) => s.as_matrix().clone(),
            CovSpec::Diagonal(v) => DMatrix::from_diagonal(v),
        }
    }

    /// The covariance as a point of `P_n`.
    pub fn to_spd(&self) -> Result<SpdMat> {
        match self {
            CovSpec::Full(s) => Ok(s.clone()),
            CovSpec::Diagonal(v) => SpdMat::from_diagonal(v.as_slice()),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovSpec::Full(s) => s.as_sym().trace(),
            CovSpec::Diagonal(v) => v.sum(),
        }
    }
}

/// Parameters `θ = (p, μ, Σ)` of a wrapped Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct WgParams {
    p: SpdMat,
    mu: DVector<f64>,
    sigma: CovSpec,
}

impl WgParams {
    pub fn new(p: SpdMat, mu: DVector<f64>, sigma: CovSpec) -> Result<Self> {
        let n = coord_len(p.dim());
        if mu.len() != n {
            return Err(Error::dim(n, mu.len()));
        }
        if sigma.dim() != n {
            return Err(Error::dim(n, sigma.dim()));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mu has non-finite entries".into()));
        }
        sigma.validate()?;
        Ok(WgParams { p, mu, sigma })
    }

    pub fn p(&self) -> &SpdMat {
        &self.p
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &CovSpec {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn coord_len(&self) -> usize {
        self.mu.len()
    }

    pub fn into_parts(self) -> (SpdMat, DVector<f64>, CovSpec) {
        (self.p, self.mu, self.sigma)
    }
}

/// Density generator of an elliptically contoured law on the tangent space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EcGenerator {
    /// `g(t) = exp(−t/2)`.
    Gaussian,
    /// Multivariate Student-t with `dof` degrees of freedom.
    StudentT(f64),
}

impl EcGenerator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EcGenerator::Gaussian => Ok(()),
            EcGenerator::StudentT(nu) if nu.is_finite() && nu > 0.0 => Ok(()),
            EcGenerator::StudentT(nu) => Err(Error::InvalidInput(format!(
                "student-t degrees of freedom must be positive and finite, got {nu}"
            ))),
        }
    }

    /// `ln k` so that `k det(Σ)^{-1/2} g(·)` integrates to 1 on `ℝⁿ`.
    pub fn log_normalizer(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            EcGenerator::Gaussian => -0.5 * n * (2.0 * PI).ln(),
            EcGenerator::StudentT(nu) => {
                libm::lgamma(0.5 * (nu + n)) - libm::lgamma(0.5 * nu) - 0.5 * n * (nu * PI).ln()
            }
        }
    }

    /// `ln g(t)` for a squared Mahalanobis radius `t ≥ 0`.
    pub fn log_g(&self, t: f64, n: usize) -> f64 {
        match *self {
            EcGenerator::Gaussian => -0.5 * t,
            EcGenerator::StudentT(nu) => -0.5 * (nu + n as f64) * (t / nu).ln_1p(),
        }
    }
}

/// A factored covariance with its mean, for repeated Mahalanobis
/// evaluations and sampling.
#[derive(Debug, Clone)]
pub struct MvnKernel {
    mean: DVector<f64>,
    factor: Factor,
    log_det: f64,
}

#[derive(Debug, Clone)]
enum Factor {
    /// Lower Cholesky factor.
    Lower(DMatrix<f64>),
    /// Square roots of the variances.
    Scale(DVector<f64>),
}

impl MvnKernel {
    pub fn new(mean: DVector<f64>, sigma: &CovSpec) -> Result<Self> {
        if mean.len() != sigma.dim() {
            return Err(Error::dim(sigma.dim(), mean.len()));
        }
        sigma.validate()?;
        let (factor, log_det) = match sigma {
            CovSpec::Full(s) => {
                let chol = Cholesky::<f64, Dyn>::new(s.as_matrix().clone()).ok_or_else(|| {
                    Error::InvalidInput("covariance is not numerically positive definite".into())
                })?;
                let l = chol.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                if !log_det.is_finite() {
                    return Err(Error::InvalidInput("covariance is singular".into()));
                }
                (Factor::Lower(l), log_det)
            }
            CovSpec::Diagonal(v) => {
                let log_det = v.iter().map(|x| x.ln()).sum();
                (Factor::Scale(v.map(f64::sqrt)), log_det)
            }
        };
        Ok(MvnKernel {
            mean,
            factor,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(t − μ)ᵀ Σ⁻¹ (t − μ)`.
    pub fn mahalanobis(&self, t: &DVector<f64>) -> f64 {
        let mut r = t - &self.mean;
        match &self.factor {
            Factor::Lower(l) => {
                l.solve_lower_triangular_mut(&mut r);
                r.norm_squared()
            }
            Factor::Scale(s) => r.iter().zip(s.iter()).map(|(a, b)| (a / b).powi(2)).sum(),
        }
    }

    pub fn log_density_ec(&self, t: &DVector<f64>, gen: EcGenerator) -> f64 {
        let n = self.dim();
        gen.log_normalizer(n) - 0.5 * self.log_det + gen.log_g(self.mahalanobis(t), n)
    }

    /// `μ + L z`.
    pub fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Lower(l) => &self.mean + l * z,
            Factor::Scale(s) => &self.mean + z.component_mul(s),
        }
    }
}

/// `Exp_p(Vect_p⁻¹ t)`.
pub fn wrap_point(p: &SpdMat, t: &DVector<f64>) -> Result<SpdMat> {
    BasePoint::new(p)?.wrap(t)
}

/// `Vect_p(Log_p x)`.
pub fn unwrap_point(p: &SpdMat, x: &SpdMat) -> Result<DVector<f64>> {
    BasePoint::new(p)?.unwrap(x)
}

const SAMPLE_BATCH: usize = 4096;

/// Draws `count` tangent coordinates `tᵢ ~ N(μ, Σ)`.
///
/// Batch `b` uses ChaCha8 seeded with `seed` on stream `b`, so the output
/// depends only on `(θ, count, seed)` and not on the thread count.
pub fn sample_coords(theta: &WgParams, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let kernel = MvnKernel::new(theta.mu.clone(), &theta.sigma)?;
    let n = theta.coord_len();
    let batches = count.div_ceil(SAMPLE_BATCH);
    let out: Vec<Vec<DVector<f64>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = SAMPLE_BATCH.min(count - b * SAMPLE_BATCH);
            (0..len)
                .map(|_| {
                    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    kernel.transform(&z)
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Draws `count` points from `WG(p; μ, Σ)`.
pub fn sample(theta: &WgParams, count: usize, seed: u64) -> Result<Vec<SpdMat>> {
    let coords = sample_coords(theta, count, seed)?;
    let bp = BasePoint::new(&theta.p)?;
    coords.par_iter().map(|t| bp.wrap(t)).collect()
}

/// Precomputed evaluator of the wrapped elliptically contoured log-density.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    base: BasePoint,
    kernel: MvnKernel,
    gen: EcGenerator,
}

impl DensityEvaluator {
    pub fn new(theta: &WgParams, gen: EcGenerator) -> Result<Self> {
        gen.validate()?;
        Ok(DensityEvaluator {
            base: BasePoint::new(&theta.p)?,
            kernel: MvnKernel::new(theta.mu.clone(), &theta.sigma)?,
            gen,
        })
    }

    pub fn gaussian(theta: &WgParams) -> Result<Self> {
        Self::new(theta, EcGenerator::Gaussian)
    }

    /// `ln f(x) = ln g_{μ,Σ}(Vect_p Log_p x) − ln J_p(Log_p x)`.
    pub fn log_density(&self, x: &SpdMat) -> Result<f64> {
        let wl = self.base.log_whitened(x)?;
        let t = crate::airm::vectorize_identity(&wl.log);
        Ok(self.kernel.log_density_ec(&t, self.gen) - log_jacobian_from_eigenvalues(&wl.eigenvalues))
    }

    pub fn log_density_batch(&self, xs: &[SpdMat]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.log_density(x)).collect()
    }
}

pub fn log_density(theta: &WgParams, x: &SpdMat) -> Result<f64> {
    DensityEvaluator::gaussian(theta)?.log_density(x)
}

pub fn density(theta: &WgParams, x: &SpdMat) -> Result<f64> {
    Ok(log_density(theta, x)?.exp())
}

pub fn log_density_ec(theta: &WgParams, gen: EcGenerator, x: &SpdMat) -> Result<f64> {
    DensityEvaluator::new(theta, gen)?.log_density(x)
}

/// `(p, μ, Σ) ↦ (eᵗ p, μ − t ν, Σ)`; the image defines the same distribution.
pub fn translate_class(theta: &WgParams, t: f64) -> WgParams {
    if t == 0.0 {
        return theta.clone();
    }
    let nu = nu_coords(theta.dim());
    WgParams {
        p: theta.p.scale(t.exp()).expect("exp(t) > 0"),
        mu: &theta.mu - nu * t,
        sigma: theta.sigma.clone(),
    }
}

/// The representative of the class of `θ` whose `μ` has the smallest norm.
///
/// Inputs already orthogonal to `ν` up to rounding are returned unchanged,
/// which makes the map exactly idempotent.
pub fn minimal_representative(theta: &WgParams) -> WgParams {
    let d = theta.dim() as f64;
    let nu = nu_coords(theta.dim());
    let t_min = theta.mu.dot(&nu) / d;
    let scale = theta.mu.amax().max(1.0);
    if t_min.abs() <= 4.0 * f64::EPSILON * scale {
        return theta.clone();
    }
    translate_class(theta, t_min)
}
