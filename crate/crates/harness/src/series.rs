//! Shrinkage covariance of a multichannel time series.

use nalgebra::{DMatrix, DVector};
use wrapped_spd::{Error, SpdMat, SymMat};

/// `(1 − α)S + α(tr S / m)I` for a `T × m` series, with `S` the unbiased
/// sample covariance (normalized by `T − 1`).
pub fn cov_from_series(series: &DMatrix<f64>, shrinkage: f64) -> wrapped_spd::Result<SpdMat> {
    let (t, m) = series.shape();
    if t < 2 || m == 0 {
        return Err(Error::InvalidInput(format!("need at least 2 samples of at least 1 channel, got {t} x {m}")));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidInput(format!("shrinkage must lie in [0, 1], got {shrinkage}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let mean: DVector<f64> = series.row_mean().transpose();
    let mut centered = series.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let s = centered.tr_mul(&centered) / (t as f64 - 1.0);
    let target = s.trace() / m as f64;
    let mut r = s * (1.0 - shrinkage);
    for i in 0..m {
        r[(i, i)] += shrinkage * target;
    }
    let singular = |sigma: DMatrix<f64>| Error::SingularCovariance { mu: mean.clone(), sigma };
    let sym = SymMat::symmetrize(&r)?;
    match SpdMat::new(sym) {
        Ok(p) => Ok(p),
        Err(_) => Err(singular(r)),
    }
}
