//! Affine-invariant Riemannian geometry of the SPD manifold.
//!
//! Conventions:
//! - `⟨u, v⟩_p = tr(p⁻¹ u p⁻¹ v)`
//! - `Exp_p(u) = p^{1/2} exp(p^{-1/2} u p^{-1/2}) p^{1/2}`, `Log_p` its inverse
//! - coordinates at the identity are taken column by column over the upper
//!   triangle, `(u₁₁, √2 u₁₂, u₂₂, √2 u₁₃, √2 u₂₃, u₃₃, …)`, and
//!   `Vect_p(u) = Vect_I(p^{-1/2} u p^{-1/2})`.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;
use crate::symmat::{eigh, reconstruct, SpdMat, SymMat};

/// Length of the coordinate vector for `d×d` matrices, `d(d+1)/2`.
pub fn coord_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Inverse of [`coord_len`]; `None` when `n` is not triangular.
pub fn dim_from_coord_len(n: usize) -> Option<usize> {
    let d = (((8 * n + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (d >= 1 && coord_len(d) == n).then_some(d)
}

/// Position of entry `(i, j)` (either order) in the coordinate vector.
pub fn coord_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Coordinate positions that hold diagonal entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagIndexSet {
    pub indices: Vec<usize>,
}

impl DiagIndexSet {
    pub fn new(d: usize) -> Self {
        DiagIndexSet {
            indices: (0..d).map(|i| coord_index(i, i)).collect(),
        }
    }
}

/// `Vect_I(u)`.
pub fn vectorize_identity(u: &SymMat) -> DVector<f64> {
    let d = u.dim();
    let mut t = DVector::zeros(coord_len(d));
    for j in 0..d {
        for i in 0..=j {
            let k = coord_index(i, j);
            t[k] = if i == j { u.get(i, j) } else { SQRT_2 * u.get(i, j) };
        }
    }
    t
}

/// `Vect_I⁻¹(t)`.
pub fn unvectorize_identity(t: &DVector<f64>) -> Result<SymMat> {
    let d = dim_from_coord_len(t.len()).ok_or_else(|| {
        Error::InvalidInput(format!("{} is not a valid coordinate length", t.len()))
    })?;
    Ok(SymMat::from_upper_fn(d, |i, j| {
        let v = t[coord_index(i, j)];
        if i == j {
            v
        } else {
            v / SQRT_2
        }
    }))
}

/// A tangent vector together with its foot point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub base: SpdMat,
    pub vec: SymMat,
}

impl TangentVec {
    pub fn new(base: SpdMat, vec: SymMat) -> Result<Self> {
        if base.dim() != vec.dim() {
            return Err(Error::dim(base.dim(), vec.dim()));
        }
        Ok(TangentVec { base, vec })
    }

    pub fn zero(base: &SpdMat) -> Self {
        TangentVec {
            base: base.clone(),
            vec: SymMat::zeros(base.dim()),
        }
    }
}

/// Coordinates of a tangent vector in the orthonormal basis at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecCoord {
    pub base: SpdMat,
    pub coords: DVector<f64>,
}

impl VecCoord {
    pub fn new(base: SpdMat, coords: DVector<f64>) -> Result<Self> {
        let n = coord_len(base.dim());
        if coords.len() != n {
            return Err(Error::dim(n, coords.len()));
        }
        Ok(VecCoord { base, coords })
    }
}

/// A base point with its square root and inverse square root cached.
///
/// Everything that evaluates many exp/log maps at one point goes through
/// this type so the two spectral roots are computed once.
#[derive(Debug, Clone)]
pub struct BasePoint {
    point: SpdMat,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

/// `log(p^{-1/2} q p^{-1/2})` and its eigenvalues (descending).
#[derive(Debug, Clone)]
pub struct WhitenedLog {
    pub log: SymMat,
    pub eigenvalues: Vec<f64>,
}

impl BasePoint {
    pub fn new(p: &SpdMat) -> Result<Self> {
        let eig = eigh(p.as_sym())?;
        let sqrt_vals: Vec<f64> = eig.values.iter().map(|v| v.sqrt()).collect();
        let inv_vals: Vec<f64> = sqrt_vals.iter().map(|v| 1.0 / v).collect();
        Ok(BasePoint {
            point: p.clone(),
            sqrt: reconstruct(&eig.vectors, &sqrt_vals).into_matrix(),
            inv_sqrt: reconstruct(&eig.vectors, &inv_vals).into_matrix(),
        })
    }

    pub fn identity(d: usize) -> Self {
        BasePoint {
            point: SpdMat::identity(d),
            sqrt: DMatrix::identity(d, d),
            inv_sqrt: DMatrix::identity(d, d),
        }
    }

    pub fn point(&self) -> &SpdMat {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.point.dim()
    }

    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    /// `p^{-1/2} x p^{-1/2}`.
    pub fn whiten(&self, x: &SymMat) -> SymMat {
        x.congruence(&self.inv_sqrt)
    }

    /// `p^{1/2} w p^{1/2}`.
    pub fn unwhiten(&self, w: &SymMat) -> SymMat {
        w.congruence(&self.sqrt)
    }

    /// `p^{1/2} exp(w) p^{1/2}` for a whitened tangent `w`.
    pub fn exp_whitened(&self, w: &SymMat) -> Result<SpdMat> {
        if w.as_matrix().iter().all(|&v| v == 0.0) {
            return Ok(self.point.clone());
        }
        let eig = eigh(w)?;
        let mut m = &self.sqrt * &eig.vectors;
        for (j, v) in eig.values.iter().enumerate() {
            m.column_mut(j).scale_mut((0.5 * v).exp());
        }
        SpdMat::from_sym_unchecked(SymMat::symmetrize(&(&m * m.transpose()))?)
    }

    pub fn exp(&self, u: &SymMat) -> Result<SpdMat> {
        self.check_dim(u.dim())?;
        self.exp_whitened(&self.whiten(u))
    }

    pub fn log_whitened(&self, q: &SpdMat) -> Result<WhitenedLog> {
        self.check_dim(q.dim())?;
        let y = self.whiten(q.as_sym());
        let eig = eigh(&y)?;
        if let Some(bad) = eig.values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::DomainError(format!(
                "whitened matrix has nonpositive eigenvalue {bad:e}"
            )));
        }
        let logs: Vec<f64> = eig.values.iter().map(|v| v.ln()).collect();
        Ok(WhitenedLog {
            log: reconstruct(&eig.vectors, &logs),
            eigenvalues: logs,
        })
    }

    pub fn log(&self, q: &SpdMat) -> Result<SymMat> {
        Ok(self.unwhiten(&self.log_whitened(q)?.log))
    }

    /// `Vect_p(Log_p q)`.
    pub fn unwrap(&self, q: &SpdMat) -> Result<DVector<f64>> {
        Ok(vectorize_identity(&self.log_whitened(q)?.log))
    }

    /// `Exp_p(Vect_p⁻¹ t)`.
    pub fn wrap(&self, t: &DVector<f64>) -> Result<SpdMat> {
        let n = coord_len(self.dim());
        if t.len() != n {
            return Err(Error::dim(n, t.len()));
        }
        self.exp_whitened(&unvectorize_identity(t)?)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::dim(self.dim(), d));
        }
        Ok(())
    }
}

fn check_base(p: &SpdMat, u: &TangentVec) -> Result<()> {
    if &u.base != p {
        return Err(Error::BaseMismatch);
    }
    Ok(())
}

/// `tr(p⁻¹ u p⁻¹ v)`.
pub fn inner(p: &SpdMat, u: &TangentVec, v: &TangentVec) -> Result<f64> {
    check_base(p, u)?;
    check_base(p, v)?;
    let bp = BasePoint::new(p)?;
    Ok(bp.whiten(&u.vec).frobenius_dot(&bp.whiten(&v.vec)))
}

/// `‖u‖_p`.
pub fn norm(p: &SpdMat, u: &TangentVec) -> Result<f64> {
    Ok(inner(p, u, u)?.max(0.0).sqrt())
}

/// `‖log(p^{-1/2} q p^{-1/2})‖_F`. Whitened eigenvalues are floored at 1e-15.
pub fn dist(p: &SpdMat, q: &SpdMat) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dim(p.dim(), q.dim()));
    }
    let bp = BasePoint::new(p)?;
    Ok(dist_from(&bp, q)?)
}

pub(crate) fn dist_from(bp: &BasePoint, q: &SpdMat) -> Result<f64> {
    let eig = eigh(&bp.whiten(q.as_sym()))?;
    Ok(eig
        .values
        .iter()
        .map(|v| v.max(1e-15).ln().powi(2))
        .sum::<f64>()
        .sqrt())
}

pub fn exp_map(p: &SpdMat, u: &TangentVec) -> Result<SpdMat> {
    check_base(p, u)?;
    BasePoint::new(p)?.exp(&u.vec)
}

pub fn log_map(p: &SpdMat, q: &SpdMat) -> Result<TangentVec> {
    if p.dim() != q.dim() {
        return Err(Error::dim(p.dim(), q.dim()));
    }
    let vec = BasePoint::new(p)?.log(q)?;
    Ok(TangentVec {
        base: p.clone(),
        vec,
    })
}

pub fn vectorize(p: &SpdMat, u: &TangentVec) -> Result<VecCoord> {
    check_base(p, u)?;
    let bp = BasePoint::new(p)?;
    Ok(VecCoord {
        base: p.clone(),
        coords: vectorize_identity(&bp.whiten(&u.vec)),
    })
}

pub fn unvectorize(t: &VecCoord) -> Result<TangentVec> {
    let n = coord_len(t.base.dim());
    if t.coords.len() != n {
        return Err(Error::dim(n, t.coords.len()));
    }
    let bp = BasePoint::new(&t.base)?;
    Ok(TangentVec {
        base: t.base.clone(),
        vec: bp.unwhiten(&unvectorize_identity(&t.coords)?),
    })
}

/// `Vect_p(p)`; the same vector for every `p` of a given dimension.
pub fn nu_vector(p: &SpdMat) -> VecCoord {
    VecCoord {
        base: p.clone(),
        coords: nu_coords(p.dim()),
    }
}

/// Indicator of the diagonal coordinate positions.
pub fn nu_coords(d: usize) -> DVector<f64> {
    vectorize_identity(&SymMat::identity(d))
}

/// Orthonormal basis `E_{p,ij} = p^{1/2} E_{I,ij} p^{1/2}` in coordinate order.
pub fn tangent_basis(p: &SpdMat) -> Result<Vec<TangentVec>> {
    let bp = BasePoint::new(p)?;
    Ok(identity_basis(p.dim())
        .into_iter()
        .map(|e| TangentVec {
            base: p.clone(),
            vec: bp.unwhiten(&e),
        })
        .collect())
}

/// The orthonormal basis at the identity, in coordinate order.
pub fn identity_basis(d: usize) -> Vec<SymMat> {
    let n = coord_len(d);
    (0..n)
        .map(|k| {
            let mut t = DVector::zeros(n);
            t[k] = 1.0;
            unvectorize_identity(&t).expect("valid length")
        })
        .collect()
}

/// Transport from `T_I` to `T_p`: `u ↦ p^{1/2} u p^{1/2}`.
pub fn ptransport_from_identity(p: &SpdMat, u: &TangentVec) -> Result<TangentVec> {
    check_base(&SpdMat::identity(p.dim()), u)?;
    let bp = BasePoint::new(p)?;
    Ok(TangentVec {
        base: p.clone(),
        vec: bp.unwhiten(&u.vec),
    })
}

/// Parallel transport along the geodesic from `from` to `to`: `u ↦ E u Eᵀ`
/// with `E = from^{1/2} (from^{-1/2} to from^{-1/2})^{1/2} from^{-1/2}`.
pub fn parallel_transport(from: &SpdMat, to: &SpdMat, u: &SymMat) -> Result<SymMat> {
    let bp = BasePoint::new(from)?;
    let mid = bp.whiten(to.as_sym());
    let eig = eigh(&mid)?;
    let root = eig.map(|v| v.max(0.0).sqrt());
    let e = bp.sqrt() * root.as_matrix() * bp.inv_sqrt();
    Ok(u.congruence(&e))
}

pub const KARCHER_TOL: f64 = 1e-10;
pub const KARCHER_MAX_ITER: usize = 200;

/// Riemannian (Karcher) mean by the fixed-point iteration
/// `p ← Exp_p(mean Log_p xᵢ)`, halving the step when the sum of squared
/// distances fails to decrease. Stops when `‖mean Log_p xᵢ‖_p ≤ tol`.
pub fn karcher_mean(xs: &[SpdMat], tol: f64, max_iter: usize) -> Result<SpdMat> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidInput("Karcher mean of an empty set".into()))?;
    let d = first.dim();
    if let Some(bad) = xs.iter().find(|x| x.dim() != d) {
        return Err(Error::dim(d, bad.dim()));
    }
    if xs.len() == 1 {
        return Ok(first.clone());
    }

    // Log-Euclidean mean as the starting point.
    let logs = par::map_ordered(xs, |x| x.log());
    let mut acc = SymMat::zeros(d);
    for l in &logs {
        acc = acc.add(l);
    }
    let init = crate::symmat::expm(&acc.scale(1.0 / xs.len() as f64))?;

    let mut state = KarcherState::at(init, xs)?;
    let mut step = 1.0;
    for _ in 0..max_iter {
        let residual = state.mean_log.frobenius_norm();
        if residual <= tol {
            return Ok(state.bp.point().clone());
        }
        loop {
            let cand_point = state.bp.exp_whitened(&state.mean_log.scale(step))?;
            let cand = KarcherState::at(cand_point, xs)?;
            if cand.variance <= state.variance * (1.0 + 1e-13) {
                state = cand;
                step = (step * 2.0).min(1.0);
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NotConverged {
                    iterations: max_iter,
                    residual,
                    last: Box::new(state.bp.point().clone()),
                });
            }
        }
    }
    let residual = state.mean_log.frobenius_norm();
    if residual <= tol {
        return Ok(state.bp.point().clone());
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
        last: Box::new(state.bp.point().clone()),
    })
}

struct KarcherState {
    bp: BasePoint,
    /// Whitened mean of the logs: `p^{-1/2} (mean Log_p xᵢ) p^{-1/2}`.
    mean_log: SymMat,
    variance: f64,
}

impl KarcherState {
    fn at(p: SpdMat, xs: &[SpdMat]) -> Result<Self> {
        let bp = BasePoint::new(&p)?;
        let logs = par::try_map_ordered(xs, |x| bp.log_whitened(x))?;
        let mut acc = SymMat::zeros(p.dim());
        let mut variance = 0.0;
        for l in &logs {
            acc = acc.add(&l.log);
            variance += l.eigenvalues.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(KarcherState {
            mean_log: acc.scale(1.0 / xs.len() as f64),
            bp,
            variance,
        })
    }
}

/// Logarithmic product. With `base = None` (the identity) this is
/// `exp(log q1 + log q2)`; otherwise `Exp_p(Log_p q1 + Log_p q2)`.
pub fn log_product(q1: &SpdMat, q2: &SpdMat, base: Option<&SpdMat>) -> Result<SpdMat> {
    let d = q1.dim();
    if q2.dim() != d {
        return Err(Error::dim(d, q2.dim()));
    }
    let bp = match base {
        Some(p) if p.dim() != d => return Err(Error::dim(d, p.dim())),
        Some(p) => BasePoint::new(p)?,
        None => BasePoint::identity(d),
    };
    let w = bp.log_whitened(q1)?.log.add(&bp.log_whitened(q2)?.log);
    bp.exp_whitened(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn diag(v: &[f64]) -> SpdMat {
        SpdMat::from_diagonal(v).unwrap()
    }

    fn close(a: &SymMat, b: &SymMat, tol: f64) -> bool {
        (a.as_matrix() - b.as_matrix()).amax() <= tol
    }

    fn sample_spd(d: usize, seed: u64) -> SpdMat {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s as f64 / u64::MAX as f64) - 0.5
        };
        let a = DMatrix::from_fn(d, d, |_, _| next());
        SpdMat::from_matrix(&(&a * a.transpose() + DMatrix::identity(d, d) * 0.3)).unwrap()
    }

    #[test]
    fn coordinate_layout() {
        assert_eq!(coord_index(0, 0), 0);
        assert_eq!(coord_index(0, 1), 1);
        assert_eq!(coord_index(1, 1), 2);
        assert_eq!(coord_index(0, 2), 3);
        assert_eq!(coord_index(1, 2), 4);
        assert_eq!(coord_index(2, 2), 5);
        assert_eq!(DiagIndexSet::new(2).indices, vec![0, 2]);
        assert_eq!(DiagIndexSet::new(3).indices, vec![0, 2, 5]);
        for d in 1..12 {
            assert_eq!(dim_from_coord_len(coord_len(d)), Some(d));
        }
        assert_eq!(dim_from_coord_len(4), None);
        assert_eq!(dim_from_coord_len(0), None);
    }

    #[test]
    fn inner_examples() {
        let i2 = SpdMat::identity(2);
        let u = TangentVec::new(i2.clone(), SymMat::from_upper_fn(2, |i, j| (i + 2 * j) as f64)).unwrap();
        let v = TangentVec::new(i2.clone(), SymMat::from_upper_fn(2, |i, j| 1.0 + (i * j) as f64)).unwrap();
        let frob = u.vec.frobenius_dot(&v.vec);
        assert!((inner(&i2, &u, &v).unwrap() - frob).abs() < 1e-14);

        let p = sample_spd(3, 1);
        let pp = TangentVec::new(p.clone(), p.as_sym().clone()).unwrap();
        assert!((inner(&p, &pp, &pp).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inner_affine_invariance() {
        let p = sample_spd(2, 5);
        let u = TangentVec::new(p.clone(), SymMat::from_upper_fn(2, |i, j| 0.3 + i as f64 - 0.7 * j as f64)).unwrap();
        let v = TangentVec::new(p.clone(), SymMat::from_upper_fn(2, |i, j| 1.1 - (i * j) as f64)).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let pa = p.congruence(&a).unwrap();
        let ua = TangentVec::new(pa.clone(), u.vec.congruence(&a)).unwrap();
        let va = TangentVec::new(pa.clone(), v.vec.congruence(&a)).unwrap();
        let lhs = inner(&pa, &ua, &va).unwrap();
        let rhs = inner(&p, &u, &v).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn inner_base_mismatch() {
        let u = TangentVec::zero(&SpdMat::identity(2));
        let p = diag(&[2.0, 1.0]);
        assert!(matches!(inner(&p, &u, &u), Err(Error::BaseMismatch)));
    }

    #[test]
    fn dist_examples() {
        let p = sample_spd(3, 2);
        assert!(dist(&p, &p).unwrap() < 1e-7);
        let d = dist(&SpdMat::identity(2), &diag(&[E, E])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-14);
        let d = dist(&diag(&[1.0, 1.0]), &diag(&[E * E, 1.0])).unwrap();
        assert!((d - 2.0).abs() < 1e-14);
        assert!(matches!(dist(&p, &SpdMat::identity(2)), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn exp_log_examples() {
        let i2 = SpdMat::identity(2);
        let p = sample_spd(2, 7);
        assert!(close(exp_map(&p, &TangentVec::zero(&p)).unwrap().as_sym(), p.as_sym(), 1e-13));
        let e = exp_map(&i2, &TangentVec::new(i2.clone(), SymMat::identity(2)).unwrap()).unwrap();
        assert!(close(e.as_sym(), &SymMat::identity(2).scale(E), 1e-14));
        let e = exp_map(&i2, &TangentVec::new(i2.clone(), SymMat::from_diagonal(&[1.0, -1.0])).unwrap()).unwrap();
        assert!(close(e.as_sym(), &SymMat::from_diagonal(&[E, 1.0 / E]), 1e-14));

        assert!(log_map(&p, &p).unwrap().vec.frobenius_norm() < 1e-12);
        let l = log_map(&i2, &diag(&[E, E])).unwrap();
        assert!(close(&l.vec, &SymMat::identity(2), 1e-14));
        let l = log_map(&i2, &diag(&[E * E, 1.0])).unwrap();
        assert!(close(&l.vec, &SymMat::from_diagonal(&[2.0, 0.0]), 1e-14));
    }

    #[test]
    fn vectorize_examples() {
        let i2 = SpdMat::identity(2);
        let u = TangentVec::new(i2.clone(), SymMat::from_upper_fn(2, |i, j| (1 + i + j) as f64)).unwrap();
        let t = vectorize(&i2, &u).unwrap();
        assert_eq!(t.coords.as_slice(), &[1.0, 2.0 * SQRT_2, 3.0]);
        let t = vectorize(&i2, &TangentVec::new(i2.clone(), SymMat::identity(2)).unwrap()).unwrap();
        assert_eq!(t.coords.as_slice(), &[1.0, 0.0, 1.0]);
        let p = sample_spd(3, 4);
        let z = unvectorize(&VecCoord::new(p.clone(), DVector::zeros(6)).unwrap()).unwrap();
        assert_eq!(z.vec, SymMat::zeros(3));
        assert!(VecCoord::new(p, DVector::zeros(5)).is_err());
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_coords(2).as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(nu_coords(3).as_slice(), &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        for d in 2..=10 {
            assert!((nu_coords(d).norm_squared() - d as f64).abs() < 1e-15);
            let nu = nu_coords(d);
            for (k, v) in nu.iter().enumerate() {
                let on_diag = DiagIndexSet::new(d).indices.contains(&k);
                assert_eq!(*v, if on_diag { 1.0 } else { 0.0 });
            }
        }
        let p = sample_spd(3, 11);
        let direct = vectorize(&p, &TangentVec::new(p.clone(), p.as_sym().clone()).unwrap()).unwrap();
        assert!((direct.coords - nu_coords(3)).amax() < 1e-12);
    }

    #[test]
    fn tangent_basis_at_identity() {
        let b = tangent_basis(&SpdMat::identity(2)).unwrap();
        let h = 1.0 / SQRT_2;
        assert_eq!(b[0].vec, SymMat::from_diagonal(&[1.0, 0.0]));
        assert!(close(&b[1].vec, &SymMat::from_upper_fn(2, |i, j| if i == j { 0.0 } else { h }), 1e-15));
        assert_eq!(b[2].vec, SymMat::from_diagonal(&[0.0, 1.0]));
    }

    #[test]
    fn tangent_basis_orthonormal_and_coordinates() {
        let p = sample_spd(3, 8);
        let basis = tangent_basis(&p).unwrap();
        for (a, ea) in basis.iter().enumerate() {
            for (b, eb) in basis.iter().enumerate() {
                let g = inner(&p, ea, eb).unwrap();
                assert!((g - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        let u = TangentVec::new(p.clone(), SymMat::from_upper_fn(3, |i, j| 0.2 * i as f64 - 0.5 * j as f64 + 0.1)).unwrap();
        let t = vectorize(&p, &u).unwrap();
        for (k, e) in basis.iter().enumerate() {
            assert!((t.coords[k] - inner(&p, &u, e).unwrap()).abs() < 1e-10);
        }
        let at_i = tangent_basis(&SpdMat::identity(3)).unwrap();
        for (e_p, e_i) in basis.iter().zip(&at_i) {
            let moved = ptransport_from_identity(&p, e_i).unwrap();
            assert!(close(&moved.vec, &e_p.vec, 1e-12));
        }
    }

    #[test]
    fn transport_from_identity_examples() {
        let i2 = SpdMat::identity(2);
        let u = TangentVec::new(i2.clone(), SymMat::from_upper_fn(2, |i, j| (i + j) as f64 - 0.5)).unwrap();
        assert!(close(&ptransport_from_identity(&i2, &u).unwrap().vec, &u.vec, 1e-15));
        let e11 = TangentVec::new(i2.clone(), SymMat::from_diagonal(&[1.0, 0.0])).unwrap();
        let p = diag(&[4.0, 1.0]);
        let moved = ptransport_from_identity(&p, &e11).unwrap();
        assert!(close(&moved.vec, &SymMat::from_diagonal(&[4.0, 0.0]), 1e-14));
        let q = sample_spd(2, 3);
        let moved = ptransport_from_identity(&q, &u).unwrap();
        assert!((norm(&q, &moved).unwrap() - u.vec.frobenius_norm()).abs() < 1e-10);
        assert!(matches!(ptransport_from_identity(&q, &moved), Err(Error::BaseMismatch)));
    }

    #[test]
    fn parallel_transport_is_isometric() {
        let p = sample_spd(3, 21);
        let q = sample_spd(3, 22);
        let u = TangentVec::new(p.clone(), SymMat::from_upper_fn(3, |i, j| 0.4 * i as f64 - 0.1 * j as f64)).unwrap();
        let v = parallel_transport(&p, &q, &u.vec).unwrap();
        let v = TangentVec::new(q.clone(), v).unwrap();
        assert!((norm(&q, &v).unwrap() - norm(&p, &u).unwrap()).abs() < 1e-10);
        let back = parallel_transport(&q, &p, &v.vec).unwrap();
        assert!(close(&back, &u.vec, 1e-10));
    }

    #[test]
    fn karcher_examples() {
        let p = sample_spd(3, 9);
        assert_eq!(karcher_mean(&[p.clone()], 1e-10, 200).unwrap(), p);
        let m = karcher_mean(&[diag(&[E, E]), diag(&[1.0 / E, 1.0 / E])], 1e-10, 200).unwrap();
        assert!(close(m.as_sym(), &SymMat::identity(2), 1e-12));

        let xs = [diag(&[1.0, 2.0, 8.0]), diag(&[4.0, 0.5, 1.0]), diag(&[2.0, 3.0, 0.25])];
        let m = karcher_mean(&xs, 1e-10, 200).unwrap();
        for i in 0..3 {
            let g = xs.iter().map(|x| x.as_matrix()[(i, i)]).product::<f64>().powf(1.0 / 3.0);
            assert!((m.as_matrix()[(i, i)] - g).abs() < 1e-10 * g);
        }
        assert!(matches!(karcher_mean(&[], 1e-10, 200), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn karcher_residual_below_tol() {
        let xs: Vec<SpdMat> = (0..15).map(|s| sample_spd(3, 100 + s)).collect();
        let m = karcher_mean(&xs, 1e-10, 200).unwrap();
        let bp = BasePoint::new(&m).unwrap();
        let mut acc = SymMat::zeros(3);
        for x in &xs {
            acc = acc.add(&bp.log_whitened(x).unwrap().log);
        }
        assert!(acc.scale(1.0 / 15.0).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn log_product_examples() {
        let p = sample_spd(2, 31);
        let r = log_product(&p, &p.inverse(), None).unwrap();
        assert!(close(r.as_sym(), &SymMat::identity(2), 1e-12));
        let r = log_product(&diag(&[E, E]), &diag(&[E, E]), None).unwrap();
        assert!(close(r.as_sym(), &SymMat::identity(2).scale(E * E), 1e-12));
        let r = log_product(&p, &SpdMat::identity(2), None).unwrap();
        assert!(close(r.as_sym(), p.as_sym(), 1e-12));
        let base = sample_spd(2, 32);
        let r = log_product(&p, &base, Some(&base)).unwrap();
        assert!(close(r.as_sym(), p.as_sym(), 1e-10));
    }
}
