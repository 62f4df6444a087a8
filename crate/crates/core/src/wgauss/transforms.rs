//! Standardizing transforms and the wrapped central limit statistic.
//!
//! With `X ~ WG(p; μ, Σ)`:
//! - `p^{-1/2} X p^{-1/2} ~ WG(I; μ, Σ)`
//! - `Exp_p(Log_p X − Vect_p⁻¹ μ) ~ WG(p; 0, Σ)`
//! - `Exp_p(Vect_p⁻¹(A Vect_p Log_p X)) ~ WG(p; Aμ, AΣAᵀ)`

use nalgebra::{DMatrix, DVector};

use crate::airm::{coord_len, BasePoint};
use crate::error::{Error, Result};
use crate::symmat::SpdMat;

use super::{CovSpec, WgParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `WG(I; 0, I) → WG(p; μ, Σ)`.
    FromStandard,
    /// `WG(p; μ, Σ) → WG(I; 0, I)`.
    ToStandard,
}

/// `x ↦ p^{-1/2} x p^{-1/2}` (`inverse = false`) or `x ↦ p^{1/2} x p^{1/2}`.
pub fn congruence_transform(p: &SpdMat, x: &SpdMat, inverse: bool) -> Result<SpdMat> {
    if p.dim() != x.dim() {
        return Err(Error::dim(p.dim(), x.dim()));
    }
    let bp = BasePoint::new(p)?;
    let a = if inverse { bp.sqrt() } else { bp.inv_sqrt() };
    SpdMat::from_sym_unchecked(x.as_sym().congruence(a))
}

/// `x ↦ Exp_p(Log_p x + sign · Vect_p⁻¹ μ)` with `sign = ±1`.
pub fn tangent_translate(p: &SpdMat, x: &SpdMat, mu: &DVector<f64>, sign: f64) -> Result<SpdMat> {
    let bp = BasePoint::new(p)?;
    let n = coord_len(p.dim());
    if mu.len() != n {
        return Err(Error::dim(n, mu.len()));
    }
    bp.wrap(&(bp.unwrap(x)? + mu * sign))
}

/// `x ↦ Exp_p(Vect_p⁻¹(Σ^{±1/2} Vect_p Log_p x))`, with the symmetric root.
/// `inverse = true` applies `Σ^{-1/2}`.
pub fn tangent_scale(p: &SpdMat, x: &SpdMat, sigma: &CovSpec, inverse: bool) -> Result<SpdMat> {
    let bp = BasePoint::new(p)?;
    let n = coord_len(p.dim());
    if sigma.dim() != n {
        return Err(Error::dim(n, sigma.dim()));
    }
    let t = bp.unwrap(x)?;
    bp.wrap(&sigma_root_apply(sigma, &t, inverse))
}

fn sigma_root_apply(sigma: &CovSpec, t: &DVector<f64>, inverse: bool) -> DVector<f64> {
    match sigma {
        CovSpec::Full(s) => {
            let root: DMatrix<f64> = if inverse {
                s.inv_sqrt().into_sym().into_matrix()
            } else {
                s.sqrt().into_sym().into_matrix()
            };
            root * t
        }
        CovSpec::Diagonal(v) => {
            DVector::from_fn(t.len(), |i, _| if inverse { t[i] / v[i].sqrt() } else { t[i] * v[i].sqrt() })
        }
    }
}

/// Maps between `WG(I; 0, I)` and `WG(p; μ, Σ)`.
///
/// `ToStandard` is: translate by `−μ`, scale by `Σ^{-1/2}`, congruence by
/// `p^{-1/2}`. `FromStandard` applies the inverses in reverse order and
/// equals `x ↦ Exp_p(Vect_p⁻¹(Σ^{1/2} Vect_I log x + μ))`.
pub fn standardize_map(theta: &WgParams, x: &SpdMat, direction: Direction) -> Result<SpdMat> {
    let p = theta.p();
    if x.dim() != p.dim() {
        return Err(Error::dim(p.dim(), x.dim()));
    }
    match direction {
        Direction::ToStandard => {
            let y = tangent_translate(p, x, theta.mu(), -1.0)?;
            let y = tangent_scale(p, &y, theta.sigma(), true)?;
            congruence_transform(p, &y, false)
        }
        Direction::FromStandard => {
            let y = congruence_transform(p, x, true)?;
            let y = tangent_scale(p, &y, theta.sigma(), false)?;
            tangent_translate(p, &y, theta.mu(), 1.0)
        }
    }
}

fn check_clt_inputs(xs: &[SpdMat], mu: &DVector<f64>, base: &SpdMat) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("CLT statistic of an empty sample".into()));
    }
    let n = coord_len(base.dim());
    if mu.len() != n {
        return Err(Error::dim(n, mu.len()));
    }
    if let Some(bad) = xs.iter().find(|x| x.dim() != base.dim()) {
        return Err(Error::dim(base.dim(), bad.dim()));
    }
    Ok(())
}

/// `Exp_b((1/√n) Σᵢ (Log_b xᵢ − Vect_b⁻¹ μ))`, computed in coordinates.
pub fn clt_statistic(xs: &[SpdMat], mu_hat: &DVector<f64>, base: &SpdMat) -> Result<SpdMat> {
    check_clt_inputs(xs, mu_hat, base)?;
    let bp = BasePoint::new(base)?;
    let mut acc = DVector::zeros(mu_hat.len());
    for x in xs {
        acc += bp.unwrap(x)? - mu_hat;
    }
    bp.wrap(&(acc / (xs.len() as f64).sqrt()))
}

/// The same statistic through logarithmic products and a matrix power:
/// `(⨀ᵢ (xᵢ ⊙ m⁻¹))^{1/√n}` with `m = Exp_b(Vect_b⁻¹ μ)`, products and
/// powers taken at `b`.
pub fn clt_statistic_power(xs: &[SpdMat], mu_hat: &DVector<f64>, base: &SpdMat) -> Result<SpdMat> {
    check_clt_inputs(xs, mu_hat, base)?;
    let bp = BasePoint::new(base)?;
    let m_inv = bp.wrap(&(-mu_hat))?;
    let mut acc = base.clone();
    for x in xs {
        let y = crate::airm::log_product(x, &m_inv, Some(base))?;
        acc = crate::airm::log_product(&acc, &y, Some(base))?;
    }
    let w = bp.log_whitened(&acc)?.log;
    bp.exp_whitened(&w.scale(1.0 / (xs.len() as f64).sqrt()))
}
