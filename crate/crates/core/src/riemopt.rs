//! Riemannian conjugate gradient.
//!
//! The optimizer is generic over [`Manifold`]. Provided manifolds: the SPD
//! cone with the affine-invariant metric, Euclidean space, the positive
//! orthant with the log metric, and the parameter product
//! `Θ = P_d × ℝⁿ × (P_n or ℝⁿ₊)`.

use std::time::Instant;

use nalgebra::DVector;

use crate::airm::{identity_basis, parallel_transport, BasePoint};
use crate::error::{Error, Result};
use crate::symmat::{SpdMat, SymMat};
use crate::wgauss::{CovKind, CovSpec};

/// A Riemannian manifold with the operations CG needs.
pub trait Manifold {
    type Point: Clone;
    type Tangent: Clone;

    /// Intrinsic dimension at `x`.
    fn dim(&self, x: &Self::Point) -> usize;
    fn inner(&self, x: &Self::Point, u: &Self::Tangent, v: &Self::Tangent) -> f64;
    fn zero(&self, x: &Self::Point) -> Self::Tangent;
    /// `a·u + b·v`.
    fn lincomb(&self, a: f64, u: &Self::Tangent, b: f64, v: &Self::Tangent) -> Self::Tangent;
    fn retract(&self, x: &Self::Point, u: &Self::Tangent, step: f64) -> Result<Self::Point>;
    /// Moves `u ∈ T_from` to `T_to`.
    fn transport(&self, from: &Self::Point, to: &Self::Point, u: &Self::Tangent) -> Result<Self::Tangent>;
    /// Converts a Euclidean gradient to the Riemannian one.
    fn riemannian_gradient(&self, x: &Self::Point, egrad: &Self::Tangent) -> Self::Tangent;
    /// An orthonormal basis of `T_x`.
    fn tangent_basis(&self, x: &Self::Point) -> Vec<Self::Tangent>;

    fn norm(&self, x: &Self::Point, u: &Self::Tangent) -> f64 {
        self.inner(x, u, u).max(0.0).sqrt()
    }
}

/// `P_d` with the affine-invariant metric and exponential retraction.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpdManifold;

impl Manifold for SpdManifold {
    type Point = SpdMat;
    type Tangent = SymMat;

    fn dim(&self, x: &SpdMat) -> usize {
        crate::airm::coord_len(x.dim())
    }

    fn inner(&self, x: &SpdMat, u: &SymMat, v: &SymMat) -> f64 {
        let inv = x.inverse();
        let a = inv.as_matrix() * u.as_matrix();
        let b = inv.as_matrix() * v.as_matrix();
        a.component_mul(&b.transpose()).sum()
    }

    fn zero(&self, x: &SpdMat) -> SymMat {
        SymMat::zeros(x.dim())
    }

    fn lincomb(&self, a: f64, u: &SymMat, b: f64, v: &SymMat) -> SymMat {
        u.scale(a).add(&v.scale(b))
    }

    fn retract(&self, x: &SpdMat, u: &SymMat, step: f64) -> Result<SpdMat> {
        if step == 0.0 {
            return Ok(x.clone());
        }
        BasePoint::new(x)?.exp(&u.scale(step))
    }

    fn transport(&self, from: &SpdMat, to: &SpdMat, u: &SymMat) -> Result<SymMat> {
        parallel_transport(from, to, u)
    }

    fn riemannian_gradient(&self, x: &SpdMat, egrad: &SymMat) -> SymMat {
        SymMat::symmetrize(&(x.as_matrix() * egrad.as_matrix() * x.as_matrix())).expect("square")
    }

    fn tangent_basis(&self, x: &SpdMat) -> Vec<SymMat> {
        let bp = BasePoint::new(x).expect("validated SPD point");
        identity_basis(x.dim()).iter().map(|e| bp.unwhiten(e)).collect()
    }
}

/// Product of copies of one manifold, with the sum metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerManifold<M>(pub M);

impl<M: Manifold> Manifold for PowerManifold<M> {
    type Point = Vec<M::Point>;
    type Tangent = Vec<M::Tangent>;

    fn dim(&self, x: &Self::Point) -> usize {
        x.iter().map(|xi| self.0.dim(xi)).sum()
    }

    fn inner(&self, x: &Self::Point, u: &Self::Tangent, v: &Self::Tangent) -> f64 {
        x.iter().zip(u).zip(v).map(|((xi, ui), vi)| self.0.inner(xi, ui, vi)).sum()
    }

    fn zero(&self, x: &Self::Point) -> Self::Tangent {
        x.iter().map(|xi| self.0.zero(xi)).collect()
    }

    fn lincomb(&self, a: f64, u: &Self::Tangent, b: f64, v: &Self::Tangent) -> Self::Tangent {
        u.iter().zip(v).map(|(ui, vi)| self.0.lincomb(a, ui, b, vi)).collect()
    }

    fn retract(&self, x: &Self::Point, u: &Self::Tangent, step: f64) -> Result<Self::Point> {
        x.iter().zip(u).map(|(xi, ui)| self.0.retract(xi, ui, step)).collect()
    }

    fn transport(&self, from: &Self::Point, to: &Self::Point, u: &Self::Tangent) -> Result<Self::Tangent> {
        from.iter().zip(to).zip(u).map(|((a, b), ui)| self.0.transport(a, b, ui)).collect()
    }

    fn riemannian_gradient(&self, x: &Self::Point, egrad: &Self::Tangent) -> Self::Tangent {
        x.iter().zip(egrad).map(|(xi, gi)| self.0.riemannian_gradient(xi, gi)).collect()
    }

    fn tangent_basis(&self, x: &Self::Point) -> Vec<Self::Tangent> {
        let mut out = Vec::new();
        for (k, xk) in x.iter().enumerate() {
            for e in self.0.tangent_basis(xk) {
                let mut t = self.zero(x);
                t[k] = e;
                out.push(t);
            }
        }
        out
    }
}

/// `ℝⁿ` with the standard metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanManifold;

impl Manifold for EuclideanManifold {
    type Point = DVector<f64>;
    type Tangent = DVector<f64>;

    fn dim(&self, x: &DVector<f64>) -> usize {
        x.len()
    }

    fn inner(&self, _: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(v)
    }

    fn zero(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn lincomb(&self, a: f64, u: &DVector<f64>, b: f64, v: &DVector<f64>) -> DVector<f64> {
        u * a + v * b
    }

    fn retract(&self, x: &DVector<f64>, u: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
        Ok(x + u * step)
    }

    fn transport(&self, _: &DVector<f64>, _: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(u.clone())
    }

    fn riemannian_gradient(&self, _: &DVector<f64>, egrad: &DVector<f64>) -> DVector<f64> {
        egrad.clone()
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..x.len())
            .map(|k| {
                let mut e = DVector::zeros(x.len());
                e[k] = 1.0;
                e
            })
            .collect()
    }
}

/// The positive orthant with metric `⟨u, v⟩_σ = Σ uᵢvᵢ/σᵢ²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PositiveOrthant;

impl Manifold for PositiveOrthant {
    type Point = DVector<f64>;
    type Tangent = DVector<f64>;

    fn dim(&self, x: &DVector<f64>) -> usize {
        x.len()
    }

    fn inner(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (0..x.len()).map(|i| u[i] * v[i] / (x[i] * x[i])).sum()
    }

    fn zero(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn lincomb(&self, a: f64, u: &DVector<f64>, b: f64, v: &DVector<f64>) -> DVector<f64> {
        u * a + v * b
    }

    fn retract(&self, x: &DVector<f64>, u: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
        let y = DVector::from_fn(x.len(), |i, _| x[i] * (step * u[i] / x[i]).exp());
        if y.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NumericalFailure("retraction left the positive orthant".into()));
        }
        Ok(y)
    }

    fn transport(&self, from: &DVector<f64>, to: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_fn(u.len(), |i, _| u[i] * to[i] / from[i]))
    }

    fn riemannian_gradient(&self, x: &DVector<f64>, egrad: &DVector<f64>) -> DVector<f64> {
        egrad.component_mul(x).component_mul(x)
    }

    fn tangent_basis(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..x.len())
            .map(|k| {
                let mut e = DVector::zeros(x.len());
                e[k] = x[k];
                e
            })
            .collect()
    }
}

/// A point of `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub p: SpdMat,
    pub mu: DVector<f64>,
    pub sigma: CovSpec,
}

/// Tangent of the covariance factor.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaTangent {
    Full(SymMat),
    Diagonal(DVector<f64>),
}

/// A tangent vector of `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub dp: SymMat,
    pub dmu: DVector<f64>,
    pub dsigma: SigmaTangent,
}

/// `Θ` as the Riemannian product of its three factors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThetaManifold;

impl ThetaManifold {
    fn check(x: &ProductPoint, u: &ProductTangent) -> Result<()> {
        if u.dp.dim() != x.p.dim() {
            return Err(Error::dim(x.p.dim(), u.dp.dim()));
        }
        if u.dmu.len() != x.mu.len() {
            return Err(Error::dim(x.mu.len(), u.dmu.len()));
        }
        match (&x.sigma, &u.dsigma) {
            (CovSpec::Full(s), SigmaTangent::Full(t)) if s.dim() == t.dim() => Ok(()),
            (CovSpec::Diagonal(s), SigmaTangent::Diagonal(t)) if s.len() == t.len() => Ok(()),
            _ => Err(Error::InvalidInput("covariance tangent does not match its point".into())),
        }
    }
}

impl Manifold for ThetaManifold {
    type Point = ProductPoint;
    type Tangent = ProductTangent;

    fn dim(&self, x: &ProductPoint) -> usize {
        SpdManifold.dim(&x.p) + x.mu.len() + x.sigma_dim()
    }

    fn inner(&self, x: &ProductPoint, u: &ProductTangent, v: &ProductTangent) -> f64 {
        let s = match (&x.sigma, &u.dsigma, &v.dsigma) {
            (CovSpec::Full(s), SigmaTangent::Full(a), SigmaTangent::Full(b)) => SpdManifold.inner(s, a, b),
            (CovSpec::Diagonal(s), SigmaTangent::Diagonal(a), SigmaTangent::Diagonal(b)) => {
                PositiveOrthant.inner(s, a, b)
            }
            _ => panic!("covariance tangent does not match its point"),
        };
        SpdManifold.inner(&x.p, &u.dp, &v.dp) + u.dmu.dot(&v.dmu) + s
    }

    fn zero(&self, x: &ProductPoint) -> ProductTangent {
        ProductTangent {
            dp: SymMat::zeros(x.p.dim()),
            dmu: DVector::zeros(x.mu.len()),
            dsigma: match &x.sigma {
                CovSpec::Full(s) => SigmaTangent::Full(SymMat::zeros(s.dim())),
                CovSpec::Diagonal(v) => SigmaTangent::Diagonal(DVector::zeros(v.len())),
            },
        }
    }

    fn lincomb(&self, a: f64, u: &ProductTangent, b: f64, v: &ProductTangent) -> ProductTangent {
        ProductTangent {
            dp: u.dp.scale(a).add(&v.dp.scale(b)),
            dmu: &u.dmu * a + &v.dmu * b,
            dsigma: match (&u.dsigma, &v.dsigma) {
                (SigmaTangent::Full(x), SigmaTangent::Full(y)) => SigmaTangent::Full(x.scale(a).add(&y.scale(b))),
                (SigmaTangent::Diagonal(x), SigmaTangent::Diagonal(y)) => SigmaTangent::Diagonal(x * a + y * b),
                _ => panic!("mismatched covariance tangents"),
            },
        }
    }

    fn retract(&self, x: &ProductPoint, u: &ProductTangent, step: f64) -> Result<ProductPoint> {
        Self::check(x, u)?;
        if step == 0.0 {
            return Ok(x.clone());
        }
        let sigma = match (&x.sigma, &u.dsigma) {
            (CovSpec::Full(s), SigmaTangent::Full(t)) => CovSpec::Full(SpdManifold.retract(s, t, step)?),
            (CovSpec::Diagonal(s), SigmaTangent::Diagonal(t)) => {
                CovSpec::Diagonal(PositiveOrthant.retract(s, t, step)?)
            }
            _ => unreachable!("checked above"),
        };
        Ok(ProductPoint {
            p: SpdManifold.retract(&x.p, &u.dp, step)?,
            mu: &x.mu + &u.dmu * step,
            sigma,
        })
    }

    fn transport(&self, from: &ProductPoint, to: &ProductPoint, u: &ProductTangent) -> Result<ProductTangent> {
        let dsigma = match (&from.sigma, &to.sigma, &u.dsigma) {
            (CovSpec::Full(a), CovSpec::Full(b), SigmaTangent::Full(t)) => {
                SigmaTangent::Full(SpdManifold.transport(a, b, t)?)
            }
            (CovSpec::Diagonal(a), CovSpec::Diagonal(b), SigmaTangent::Diagonal(t)) => {
                SigmaTangent::Diagonal(PositiveOrthant.transport(a, b, t)?)
            }
            _ => return Err(Error::InvalidInput("covariance kinds differ".into())),
        };
        Ok(ProductTangent {
            dp: SpdManifold.transport(&from.p, &to.p, &u.dp)?,
            dmu: u.dmu.clone(),
            dsigma,
        })
    }

    fn riemannian_gradient(&self, x: &ProductPoint, egrad: &ProductTangent) -> ProductTangent {
        ProductTangent {
            dp: SpdManifold.riemannian_gradient(&x.p, &egrad.dp),
            dmu: egrad.dmu.clone(),
            dsigma: match (&x.sigma, &egrad.dsigma) {
                (CovSpec::Full(s), SigmaTangent::Full(g)) => SigmaTangent::Full(SpdManifold.riemannian_gradient(s, g)),
                (CovSpec::Diagonal(s), SigmaTangent::Diagonal(g)) => {
                    SigmaTangent::Diagonal(PositiveOrthant.riemannian_gradient(s, g))
                }
                _ => panic!("covariance gradient does not match its point"),
            },
        }
    }

    fn tangent_basis(&self, x: &ProductPoint) -> Vec<ProductTangent> {
        let zero = self.zero(x);
        let mut out = Vec::with_capacity(self.dim(x));
        for e in SpdManifold.tangent_basis(&x.p) {
            out.push(ProductTangent { dp: e, ..zero.clone() });
        }
        for e in EuclideanManifold.tangent_basis(&x.mu) {
            out.push(ProductTangent { dmu: e, ..zero.clone() });
        }
        match &x.sigma {
            CovSpec::Full(s) => {
                for e in SpdManifold.tangent_basis(s) {
                    out.push(ProductTangent { dsigma: SigmaTangent::Full(e), ..zero.clone() });
                }
            }
            CovSpec::Diagonal(v) => {
                for e in PositiveOrthant.tangent_basis(v) {
                    out.push(ProductTangent { dsigma: SigmaTangent::Diagonal(e), ..zero.clone() });
                }
            }
        }
        out
    }
}

impl ProductPoint {
    fn sigma_dim(&self) -> usize {
        match &self.sigma {
            CovSpec::Full(s) => SpdManifold.dim(s),
            CovSpec::Diagonal(v) => v.len(),
        }
    }

    pub fn cov_kind(&self) -> CovKind {
        self.sigma.kind()
    }
}

/// Converts a Euclidean gradient on `Θ` to the Riemannian one.
pub fn riemannian_gradient(point: &ProductPoint, euclid_grad: &ProductTangent) -> Result<ProductTangent> {
    ThetaManifold::check(point, euclid_grad)?;
    Ok(ThetaManifold.riemannian_gradient(point, euclid_grad))
}

/// Retraction on `Θ`.
pub fn retract(point: &ProductPoint, tangent: &ProductTangent, step: f64) -> Result<ProductPoint> {
    ThetaManifold.retract(point, tangent, step)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub final_cost: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    /// Cost at the initial point and after every accepted step.
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOptions {
    /// Stop when the Riemannian gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Restart to steepest descent every this many iterations; `None` uses
    /// the manifold dimension.
    pub restart_every: Option<usize>,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Maximum number of step halvings per line search.
    pub max_backtracks: usize,
    /// Step of the finite-difference gradient along unit basis directions.
    pub fd_step: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-6,
            max_iter: 5000,
            restart_every: None,
            armijo_c: 1e-4,
            max_backtracks: 60,
            fd_step: 1e-5,
        }
    }
}

/// Central finite-difference Riemannian gradient in an orthonormal basis.
pub fn fd_riemannian_gradient<M, F>(m: &M, cost: &F, x: &M::Point, h: f64) -> Result<M::Tangent>
where
    M: Manifold,
    F: Fn(&M::Point) -> Result<f64>,
{
    let mut g = m.zero(x);
    for e in m.tangent_basis(x) {
        let fp = cost(&m.retract(x, &e, h)?)?;
        let fm = cost(&m.retract(x, &e, -h)?)?;
        g = m.lincomb(1.0, &g, (fp - fm) / (2.0 * h), &e);
    }
    Ok(g)
}

/// Euclidean gradient callback.
pub type GradFn<'a, P, T> = &'a dyn Fn(&P) -> Result<T>;

/// Minimizes `cost` by Riemannian conjugate gradient (Hestenes–Stiefel,
/// clamped at zero, with periodic and non-descent restarts) and Armijo
/// backtracking.
///
/// `grad` returns the Euclidean gradient; without it a finite-difference
/// Riemannian gradient is used. A line search that finds no acceptable
/// step returns the current point with `converged = false`; one that never
/// sees a finite cost is an error.
/// Minimizer of the quadratic through `f(0)`, `f'(0)` and `f(α)`, tried
/// once after an Armijo step is accepted. Keeps whichever step is lower.
#[allow(clippy::too_many_arguments)]
fn refine_step<M, F>(
    m: &M,
    cost: &F,
    x: &M::Point,
    dir: &M::Tangent,
    f0: f64,
    slope: f64,
    alpha: f64,
    xa: M::Point,
    fa: f64,
) -> (M::Point, f64, f64)
where
    M: Manifold,
    F: Fn(&M::Point) -> Result<f64>,
{
    let curv = fa - f0 - slope * alpha;
    if curv > 0.0 {
        let aq = -slope * alpha * alpha / (2.0 * curv);
        if aq.is_finite() && aq > 0.0 && aq < 4.0 * alpha && (aq - alpha).abs() > 1e-3 * alpha {
            if let Ok(xq) = m.retract(x, dir, aq) {
                if let Ok(fq) = cost(&xq) {
                    if fq.is_finite() && fq < fa {
                        return (xq, fq, aq);
                    }
                }
            }
        }
    }
    (xa, fa, alpha)
}

pub fn minimize_cg<M, F>(
    m: &M,
    cost: F,
    grad: Option<GradFn<'_, M::Point, M::Tangent>>,
    init: M::Point,
    opts: &CgOptions,
) -> Result<(M::Point, FitReport)>
where
    M: Manifold,
    F: Fn(&M::Point) -> Result<f64>,
{
    let start = Instant::now();
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let rgrad = |x: &M::Point| -> Result<M::Tangent> {
        match grad {
            Some(g) => Ok(m.riemannian_gradient(x, &g(x)?)),
            None => fd_riemannian_gradient(m, &cost, x, opts.fd_step),
        }
    };

    let mut x = init;
    let mut f = cost(&x)?;
    if !f.is_finite() {
        return Err(Error::InvalidInput(format!("cost is not finite at the initial point ({f})")));
    }
    let mut report = FitReport {
        iterations: 0,
        final_cost: f,
        grad_norm: f64::NAN,
        converged: false,
        wall_time: 0.0,
        cost_trace: vec![f],
    };
    if opts.max_iter == 0 {
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }

    let mut g = rgrad(&x)?;
    let mut gnorm = m.norm(&x, &g);
    report.grad_norm = gnorm;
    let restart = opts.restart_every.unwrap_or_else(|| m.dim(&x)).max(1);
    let mut dir = m.lincomb(-1.0, &g, 0.0, &g);
    let mut alpha_prev = 0.5;
    let mut since_restart = 0;

    while gnorm > opts.tol && report.iterations < opts.max_iter {
        let mut slope = m.inner(&x, &g, &dir);
        if !(slope < 0.0) {
            dir = m.lincomb(-1.0, &g, 0.0, &g);
            slope = -gnorm * gnorm;
            since_restart = 0;
        }

        let mut alpha = 2.0 * alpha_prev;
        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..=opts.max_backtracks {
            if let Ok(xn) = m.retract(&x, &dir, alpha) {
                if let Ok(fnew) = cost(&xn) {
                    if fnew.is_finite() {
                        saw_finite = true;
                        if fnew <= f + opts.armijo_c * alpha * slope {
                            accepted = Some(refine_step(m, &cost, &x, &dir, f, slope, alpha, xn, fnew));
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, alpha)) = accepted else {
            report.wall_time = start.elapsed().as_secs_f64();
            if !saw_finite {
                return Err(Error::OptimizerFailure {
                    message: "line search produced no finite cost".into(),
                    report: Box::new(report),
                });
            }
            log::debug!("line search stalled at gradient norm {gnorm:e}");
            return Ok((x, report));
        };
        alpha_prev = alpha;

        let gn = rgrad(&xn)?;
        let g_t = m.transport(&x, &xn, &g)?;
        let d_t = m.transport(&x, &xn, &dir)?;
        since_restart += 1;
        let beta = if since_restart >= restart {
            since_restart = 0;
            0.0
        } else {
            let y = m.lincomb(1.0, &gn, -1.0, &g_t);
            let denom = m.inner(&xn, &d_t, &y);
            if denom.abs() > f64::MIN_POSITIVE {
                (m.inner(&xn, &gn, &y) / denom).max(0.0)
            } else {
                0.0
            }
        };
        dir = m.lincomb(-1.0, &gn, beta, &d_t);
        x = xn;
        f = fnew;
        g = gn;
        gnorm = m.norm(&x, &g);
        report.iterations += 1;
        report.final_cost = f;
        report.grad_norm = gnorm;
        report.cost_trace.push(f);
    }
    report.converged = gnorm <= opts.tol;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((x, report))
}
