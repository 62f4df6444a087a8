//! Maximum-likelihood estimation of wrapped Gaussian parameters.
//!
//! Given `p`, the likelihood is maximized in closed form by the sample mean
//! and the biased sample covariance of `Vect_p Log_p xᵢ`; the Jacobian term
//! does not involve `(μ, Σ)`. The default strategy therefore optimizes the
//! profiled cost over `p` alone. Costs handed to the optimizer are averaged
//! per sample.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::airm::{coord_len, dist, identity_basis, karcher_mean, vectorize_identity, BasePoint, KARCHER_MAX_ITER, KARCHER_TOL};
use crate::error::{Error, Result};
use crate::par;
use crate::riemopt::{minimize_cg, CgOptions, FitReport, Manifold, ProductPoint, ProductTangent, SigmaTangent, SpdManifold, ThetaManifold};
use crate::symmat::{SpdMat, SymMat};
use crate::wgauss::{log_jacobian_from_eigenvalues, minimal_representative, CovKind, CovSpec, DensityEvaluator, EcGenerator, MvnKernel, WgParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Optimize over `p` with `(μ, Σ)` eliminated in closed form.
    Profile,
    /// Optimize over the full product `Θ`.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MleInit {
    /// Karcher mean of the data, with the closed-form `(μ, Σ)` there.
    Karcher,
    Explicit(ProductPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub cov_kind: CovKind,
    pub tol: f64,
    pub max_iter: usize,
    pub init: MleInit,
    pub strategy: Strategy,
    /// Every reduction in this crate is performed in a fixed order, so fits
    /// are reproducible regardless of this flag; it is carried for callers
    /// that also suppress timing output.
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            cov_kind: CovKind::Full,
            tol: 1e-6,
            max_iter: 5000,
            init: MleInit::Karcher,
            strategy: Strategy::Profile,
            deterministic: false,
            seed: 0,
        }
    }
}

fn check_data(data: &[SpdMat], min_len: usize) -> Result<usize> {
    if data.len() < min_len {
        return Err(Error::InvalidInput(format!(
            "need at least {min_len} data points, got {}",
            data.len()
        )));
    }
    let d = data[0].dim();
    if let Some(bad) = data.iter().find(|x| x.dim() != d) {
        return Err(Error::dim(d, bad.dim()));
    }
    Ok(d)
}

/// `−Σᵢ ln f_θ(xᵢ)`.
pub fn neg_log_lik(theta: &WgParams, data: &[SpdMat]) -> Result<f64> {
    let d = check_data(data, 1)?;
    if d != theta.dim() {
        return Err(Error::dim(theta.dim(), d));
    }
    let eval = DensityEvaluator::gaussian(theta)?;
    Ok(-par::pairwise_sum(&eval.log_density_batch(data)?))
}

/// Tangent coordinates `Vect_p Log_p xᵢ` and log-Jacobians `ln J_p(Log_p xᵢ)`.
pub(crate) struct TangentData {
    pub coords: Vec<DVector<f64>>,
    pub log_jac: Vec<f64>,
}

impl TangentData {
    pub fn at(p: &SpdMat, data: &[SpdMat]) -> Result<Self> {
        let bp = BasePoint::new(p)?;
        Self::at_base(&bp, data)
    }

    pub fn at_base(bp: &BasePoint, data: &[SpdMat]) -> Result<Self> {
        let pairs = par::try_map_ordered(data, |x| {
            let wl = bp.log_whitened(x)?;
            Ok((vectorize_identity(&wl.log), log_jacobian_from_eigenvalues(&wl.eigenvalues)))
        })?;
        let (coords, log_jac) = pairs.into_iter().unzip();
        Ok(TangentData { coords, log_jac })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn mean(&self) -> DVector<f64> {
        mean_of(&self.coords)
    }

    pub fn log_jac_sum(&self) -> f64 {
        self.log_jac.iter().sum()
    }
}

pub(crate) fn mean_of(ts: &[DVector<f64>]) -> DVector<f64> {
    let mut m = DVector::zeros(ts[0].len());
    for t in ts {
        m += t;
    }
    m / ts.len() as f64
}

/// `Σᵢ (tᵢ − m)(tᵢ − m)ᵀ`.
pub(crate) fn scatter(ts: &[DVector<f64>], m: &DVector<f64>) -> DMatrix<f64> {
    let n = m.len();
    let mut s = DMatrix::zeros(n, n);
    for t in ts {
        let r = t - m;
        s.ger(1.0, &r, &r, 1.0);
    }
    s
}

/// Validates an empirical covariance, or reports it as singular.
pub(crate) fn cov_from_raw(mu: &DVector<f64>, raw: DMatrix<f64>, kind: CovKind) -> Result<CovSpec> {
    let singular = |raw: DMatrix<f64>| Error::SingularCovariance {
        mu: mu.clone(),
        sigma: raw,
    };
    match kind {
        CovKind::Full => match SpdMat::from_matrix(&raw) {
            Ok(s) => Ok(CovSpec::Full(s)),
            Err(_) => Err(singular(raw)),
        },
        CovKind::Diagonal => {
            let v = raw.diagonal();
            let top = v.amax();
            if top > 0.0 && v.iter().all(|x| x.is_finite() && *x > crate::symmat::DEFAULT_EPS_PD * top) {
                Ok(CovSpec::Diagonal(v))
            } else {
                Err(singular(raw))
            }
        }
    }
}

/// Adds `λI` with `λ = 1e-8 · tr(Σ)/n` (floored at 1e-12).
pub fn regularize_covariance(raw: &DMatrix<f64>, kind: CovKind) -> Result<CovSpec> {
    let n = raw.nrows();
    let lambda = (1e-8 * raw.trace() / n as f64).max(1e-12);
    let reg = raw + DMatrix::identity(n, n) * lambda;
    match kind {
        CovKind::Full => Ok(CovSpec::Full(SpdMat::from_matrix(&reg)?)),
        CovKind::Diagonal => CovSpec::diagonal(reg.diagonal()),
    }
}

/// `μ̂ = (1/N) Σ Vlog_p xᵢ` and the biased covariance `Σ̂` of the same
/// vectors (diagonal kind keeps the variances only).
pub fn closed_form_mu_sigma(p: &SpdMat, data: &[SpdMat], kind: CovKind) -> Result<(DVector<f64>, CovSpec)> {
    let d = check_data(data, 1)?;
    if d != p.dim() {
        return Err(Error::dim(p.dim(), d));
    }
    let td = TangentData::at(p, data)?;
    let mu = td.mean();
    let raw = scatter(&td.coords, &mu) / td.len() as f64;
    let sigma = cov_from_raw(&mu, raw, kind)?;
    Ok((mu, sigma))
}

/// As [`closed_form_mu_sigma`], regularizing a singular `Σ̂` and raising
/// `flag` when that happens.
fn closed_form_regularized(td: &TangentData, kind: CovKind, flag: &AtomicBool) -> Result<(DVector<f64>, CovSpec)> {
    let mu = td.mean();
    let raw = scatter(&td.coords, &mu) / td.len() as f64;
    match cov_from_raw(&mu, raw, kind) {
        Ok(s) => Ok((mu, s)),
        Err(Error::SingularCovariance { sigma, .. }) => {
            flag.store(true, Ordering::Relaxed);
            Ok((mu, regularize_covariance(&sigma, kind)?))
        }
        Err(e) => Err(e),
    }
}

/// Per-sample negative log-likelihood from precomputed tangent data.
fn nll_from_tangent(td: &TangentData, kernel: &MvnKernel) -> f64 {
    let g: f64 = td
        .coords
        .iter()
        .map(|t| kernel.log_density_ec(t, EcGenerator::Gaussian))
        .sum();
    (td.log_jac_sum() - g) / td.len() as f64
}

/// The profiled per-sample cost `p ↦ −ℓ_N(p, μ̂(p), Σ̂(p)) / N`.
fn profile_cost(p: &SpdMat, data: &[SpdMat], kind: CovKind, flag: &AtomicBool) -> Result<f64> {
    let td = TangentData::at(p, data)?;
    let (mu, sigma) = closed_form_regularized(&td, kind, flag)?;
    Ok(nll_from_tangent(&td, &MvnKernel::new(mu, &sigma)?))
}

/// Per-sample negative log-likelihood at a product point.
pub fn joint_cost(point: &ProductPoint, data: &[SpdMat]) -> Result<f64> {
    let td = TangentData::at(&point.p, data)?;
    Ok(nll_from_tangent(&td, &MvnKernel::new(point.mu.clone(), &point.sigma)?))
}

/// Euclidean gradient of [`joint_cost`]: the `p` block by central
/// differences in a Frobenius-orthonormal basis of symmetric matrices with
/// step `1e-5 · λ_min(p)`, the `μ` and `Σ` blocks analytically.
pub fn joint_euclidean_gradient(point: &ProductPoint, data: &[SpdMat]) -> Result<ProductTangent> {
    let d = point.p.dim();
    let lam_min = point.p.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let h = 1e-5 * lam_min;
    let kernel = MvnKernel::new(point.mu.clone(), &point.sigma)?;
    let cost_at = |p: &DMatrix<f64>| -> Result<f64> {
        let p = SpdMat::from_matrix(p)?;
        Ok(nll_from_tangent(&TangentData::at(&p, data)?, &kernel))
    };
    let mut gp = SymMat::zeros(d);
    for e in identity_basis(d) {
        let step = e.as_matrix() * h;
        let fp = cost_at(&(point.p.as_matrix() + &step))?;
        let fm = cost_at(&(point.p.as_matrix() - &step))?;
        gp = gp.add(&e.scale((fp - fm) / (2.0 * h)));
    }

    let td = TangentData::at(&point.p, data)?;
    let nf = td.len() as f64;
    let mean = td.mean();
    let s_bar = scatter(&td.coords, &point.mu) / nf;
    let (dmu, dsigma) = match &point.sigma {
        CovSpec::Full(s) => {
            let inv = s.inverse();
            let inv = inv.as_matrix();
            let dmu = inv * (&point.mu - &mean);
            let g = (inv - inv * &s_bar * inv) * 0.5;
            (dmu, SigmaTangent::Full(SymMat::symmetrize(&g)?))
        }
        CovSpec::Diagonal(v) => {
            let dmu = DVector::from_fn(v.len(), |i, _| (point.mu[i] - mean[i]) / v[i]);
            let g = DVector::from_fn(v.len(), |i, _| 0.5 / v[i] - 0.5 * s_bar[(i, i)] / (v[i] * v[i]));
            (dmu, SigmaTangent::Diagonal(g))
        }
    };
    Ok(ProductTangent { dp: gp, dmu, dsigma })
}

pub(crate) fn karcher_or_last(data: &[SpdMat]) -> Result<SpdMat> {
    match karcher_mean(data, KARCHER_TOL, KARCHER_MAX_ITER) {
        Ok(p) => Ok(p),
        Err(Error::NotConverged { residual, last, .. }) => {
            log::warn!("Karcher mean did not converge (residual {residual:e}); using its last iterate");
            Ok(*last)
        }
        Err(e) => Err(e),
    }
}

/// Fits `θ̂` by maximum likelihood. The result is always the minimal
/// representative of its equivalence class.
pub fn fit_mle(data: &[SpdMat], opts: &MleOptions) -> Result<(WgParams, FitReport)> {
    let d = check_data(data, 2)?;
    let n = coord_len(d);
    if opts.cov_kind == CovKind::Full && data.len() <= n {
        log::warn!(
            "{} samples for a full {n}x{n} covariance; the estimate will be regularized",
            data.len()
        );
    }
    if let MleInit::Explicit(pt) = &opts.init {
        if pt.p.dim() != d {
            return Err(Error::dim(d, pt.p.dim()));
        }
        if pt.sigma.kind() != opts.cov_kind && opts.strategy == Strategy::Joint {
            return Err(Error::InvalidInput("initial covariance kind differs from cov_kind".into()));
        }
    }
    let cg = CgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..CgOptions::default()
    };
    let flag = AtomicBool::new(false);
    let p0 = match &opts.init {
        MleInit::Karcher => karcher_or_last(data)?,
        MleInit::Explicit(pt) => pt.p.clone(),
    };

    let (theta, report) = match opts.strategy {
        Strategy::Profile => {
            let cost = |p: &SpdMat| profile_cost(p, data, opts.cov_kind, &flag);
            let (p_hat, report) = minimize_cg(&SpdManifold, cost, None, p0, &cg)?;
            let td = TangentData::at(&p_hat, data)?;
            let (mu, sigma) = closed_form_regularized(&td, opts.cov_kind, &flag)?;
            (WgParams::new(p_hat, mu, sigma)?, report)
        }
        Strategy::Joint => {
            let init = match &opts.init {
                MleInit::Explicit(pt) => pt.clone(),
                MleInit::Karcher => {
                    let td = TangentData::at(&p0, data)?;
                    let (mu, sigma) = closed_form_regularized(&td, opts.cov_kind, &flag)?;
                    ProductPoint { p: p0, mu, sigma }
                }
            };
            let cost = |x: &ProductPoint| joint_cost(x, data);
            let grad = |x: &ProductPoint| joint_euclidean_gradient(x, data);
            let (x, report) = minimize_cg(&ThetaManifold, cost, Some(&grad), init, &cg)?;
            (WgParams::new(x.p, x.mu, x.sigma)?, report)
        }
    };
    if flag.load(Ordering::Relaxed) {
        log::warn!("singular covariance estimate regularized by 1e-8 tr(Σ)/n");
    }
    if !report.converged && opts.max_iter > 0 {
        log::warn!(
            "MLE stopped after {} iterations with gradient norm {:e}",
            report.iterations,
            report.grad_norm
        );
    }
    Ok((minimal_representative(&theta), report))
}

/// Moment estimate for data known to have `μ* = 0`: `p̂` is the Karcher
/// mean, `μ̂ = 0` and `Σ̂` the closed-form covariance at `p̂`.
pub fn fit_moments(data: &[SpdMat], kind: CovKind) -> Result<WgParams> {
    check_data(data, 2)?;
    let p = karcher_mean(data, KARCHER_TOL, KARCHER_MAX_ITER)?;
    let (_, sigma) = closed_form_mu_sigma(&p, data, kind)?;
    let n = coord_len(p.dim());
    WgParams::new(p, DVector::zeros(n), sigma)
}

/// Errors between two parameter sets, compared as minimal representatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamErrors {
    /// `δ(p̂, p*)`.
    pub p: f64,
    /// `‖μ̂ − μ*‖₂`.
    pub mu: f64,
    /// `δ(Σ̂, Σ*)` on `P_n`.
    pub sigma: f64,
}

pub fn param_errors(truth: &WgParams, estimate: &WgParams) -> Result<ParamErrors> {
    let a = minimal_representative(truth);
    let b = minimal_representative(estimate);
    if a.dim() != b.dim() {
        return Err(Error::dim(a.dim(), b.dim()));
    }
    Ok(ParamErrors {
        p: dist(a.p(), b.p())?,
        mu: (a.mu() - b.mu()).norm(),
        sigma: dist(&a.sigma().to_spd()?, &b.sigma().to_spd()?)?,
    })
}

/// Norm of the Riemannian gradient of the per-sample joint cost.
pub fn joint_gradient_norm(point: &ProductPoint, data: &[SpdMat]) -> Result<f64> {
    let g = joint_euclidean_gradient(point, data)?;
    let r = ThetaManifold.riemannian_gradient(point, &g);
    Ok(ThetaManifold.norm(point, &r))
}
