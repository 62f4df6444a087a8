//! Jacobian determinant of the exponential map.
//!
//! At the identity, `J_I(u) = ∏_{i<j} 2 sinh((λᵢ − λⱼ)/2) / (λᵢ − λⱼ)` over the
//! eigenvalues of `u`; at `p`, `J_p(u) = J_I(p^{-1/2} u p^{-1/2})`.

use crate::airm::{BasePoint, TangentVec};
use crate::error::{Error, Result};
use crate::symmat::{eigh, SpdMat};

/// Gap below which the series form of a factor is used.
pub const EPS_EIG: f64 = 1e-7;

/// `ln(2 sinh(x/2) / x)`, even in `x`, equal to 0 at `x = 0`.
pub fn log_pair_factor(x: f64) -> f64 {
    let a = x.abs();
    if a < EPS_EIG {
        (a * a / 24.0).ln_1p()
    } else {
        0.5 * a + (-(-a).exp_m1()).ln() - a.ln()
    }
}

/// `ln J_I(u)` from the eigenvalues of `u`.
pub fn log_jacobian_from_eigenvalues(lambda: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..lambda.len() {
        for j in (i + 1)..lambda.len() {
            acc += log_pair_factor(lambda[i] - lambda[j]);
        }
    }
    acc
}

pub fn log_jacobian_det(p: &SpdMat, u: &TangentVec) -> Result<f64> {
    if &u.base != p {
        return Err(Error::BaseMismatch);
    }
    let bp = BasePoint::new(p)?;
    let eig = eigh(&bp.whiten(&u.vec))?;
    Ok(log_jacobian_from_eigenvalues(eig.values.as_slice()))
}

pub fn jacobian_det(p: &SpdMat, u: &TangentVec) -> Result<f64> {
    Ok(log_jacobian_det(p, u)?.exp())
}
