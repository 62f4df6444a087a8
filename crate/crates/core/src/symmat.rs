//! Dense symmetric matrices, SPD matrices and spectral matrix functions.
//!
//! Every matrix function used by the geometry goes through [`eigh`]: for a
//! symmetric `a = Q diag(λ) Qᵀ`, `f(a) = Q diag(f(λ)) Qᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative floor on the smallest eigenvalue of an [`SpdMat`].
pub const DEFAULT_EPS_PD: f64 = 1e-12;
/// Absolute floor on the smallest eigenvalue of an [`SpdMat`].
pub const ABS_EPS_PD: f64 = 1e-300;

/// A real symmetric matrix. Storage is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl SymMat {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Fails on non-square or empty input.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        Ok(SymMat(sym_part(m)))
    }

    /// Accepts `m` if its asymmetry is at most `tol · max(1, max|mᵢⱼ|)`, then symmetrizes.
    pub fn from_matrix_checked(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if !(asym <= tol * scale) {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Self::symmetrize(&m)
    }

    /// Builds from a function evaluated on the upper triangle (`i <= j`).
    pub fn from_upper_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(d >= 1, "dimension must be positive");
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMat(m)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dimension must be positive");
        SymMat(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        SymMat(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        SymMat(DMatrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Frobenius inner product `tr(self · other)`.
    pub fn frobenius_dot(&self, other: &SymMat) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat(&self.0 * s)
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 - &other.0)
    }

    /// `a · self · aᵀ`, re-symmetrized to absorb rounding.
    pub fn congruence(&self, a: &DMatrix<f64>) -> SymMat {
        SymMat(sym_part(&(a * &self.0 * a.transpose())))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// A symmetric positive definite matrix: a point of the SPD manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMat(SymMat);

impl SpdMat {
    /// Validates positive definiteness with the default tolerance.
    pub fn new(s: SymMat) -> Result<Self> {
        Self::with_tolerance(s, DEFAULT_EPS_PD)
    }

    /// Requires `λ_min > max(eps_rel · λ_max, 1e-300)`.
    pub fn with_tolerance(s: SymMat, eps_rel: f64) -> Result<Self> {
        let eig = eigh(&s)?;
        check_spectrum(eig.values.as_slice(), eps_rel)?;
        Ok(SpdMat(s))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(SymMat::symmetrize(m)?)
    }

    /// Builds `Q diag(values) Qᵀ`. Only the absolute floor is checked, so this
    /// accepts ill-conditioned matrices whose positivity is known analytically.
    pub fn from_spectrum(vectors: &DMatrix<f64>, values: &[f64]) -> Result<Self> {
        check_spectrum(values, 0.0)?;
        let s = reconstruct(vectors, values);
        Ok(SpdMat(s))
    }

    /// Wraps a matrix that is positive definite by construction (e.g. a
    /// congruence of a matrix exponential). Only finiteness is checked.
    pub(crate) fn from_sym_unchecked(s: SymMat) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::NumericalFailure("matrix overflowed to non-finite values".into()));
        }
        Ok(SpdMat(s))
    }

    pub fn identity(d: usize) -> Self {
        SpdMat(SymMat::identity(d))
    }

    pub fn scalar(d: usize, c: f64) -> Result<Self> {
        if !(c > ABS_EPS_PD) || !c.is_finite() {
            return Err(Error::DomainError(format!("scalar {c} is not positive")));
        }
        Ok(SpdMat(SymMat::identity(d).scale(c)))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&v| !(v > ABS_EPS_PD) || !v.is_finite()) {
            return Err(Error::DomainError("diagonal entries must be positive".into()));
        }
        Ok(SpdMat(SymMat::from_diagonal(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMat {
        &self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.0.as_matrix()
    }

    pub fn into_sym(self) -> SymMat {
        self.0
    }

    pub fn scale(&self, c: f64) -> Result<SpdMat> {
        if !(c > 0.0) {
            return Err(Error::DomainError(format!("scale {c} is not positive")));
        }
        Ok(SpdMat(self.0.scale(c)))
    }

    /// `a · self · aᵀ` for invertible `a`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMat> {
        SpdMat::new(self.0.congruence(a))
    }

    pub fn sqrt(&self) -> SpdMat {
        SpdMat(self.spectral(|v| v.sqrt()))
    }

    pub fn inv_sqrt(&self) -> SpdMat {
        SpdMat(self.spectral(|v| 1.0 / v.sqrt()))
    }

    pub fn inverse(&self) -> SpdMat {
        SpdMat(self.spectral(|v| 1.0 / v))
    }

    pub fn log(&self) -> SymMat {
        self.spectral(f64::ln)
    }

    /// `self^α` through the spectrum.
    pub fn powf(&self, alpha: f64) -> SpdMat {
        SpdMat(self.spectral(|v| v.powf(alpha)))
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.ln()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        // Construction already established convergence on this exact matrix.
        eigh(&self.0)
            .expect("eigendecomposition of a validated SPD matrix")
            .values
            .as_slice()
            .to_vec()
    }

    fn spectral(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let eig = eigh(&self.0).expect("eigendecomposition of a validated SPD matrix");
        let vals: Vec<f64> = eig.values.iter().map(|&v| f(v)).collect();
        reconstruct(&eig.vectors, &vals)
    }
}

fn check_spectrum(values: &[f64], eps_rel: f64) -> Result<()> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = (eps_rel * max).max(ABS_EPS_PD);
    if !min.is_finite() || !max.is_finite() || !(min > floor) {
        return Err(Error::DomainError(format!(
            "matrix is not positive definite (smallest eigenvalue {min:e}, largest {max:e})"
        )));
    }
    Ok(())
}

/// Orthogonal eigenvectors (columns) and eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomp {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let vals: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        reconstruct(&self.vectors, &vals)
    }
}

pub(crate) fn reconstruct(q: &DMatrix<f64>, values: &[f64]) -> SymMat {
    let d = q.nrows();
    let mut scaled = q.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let m = scaled * q.transpose();
    debug_assert_eq!(m.nrows(), d);
    SymMat(sym_part(&m))
}

/// Symmetric eigendecomposition (Householder tridiagonalization + implicit QR).
pub fn eigh(a: &SymMat) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let d = a.dim();
    if d == 1 {
        return Ok(EigenDecomp {
            vectors: DMatrix::identity(1, 1),
            values: DVector::from_element(1, a.get(0, 0)),
        });
    }
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, 1000 + 100 * d)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomp { vectors, values })
}

/// Scalar function applied through the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralFn {
    Exp,
    Log,
    Sqrt,
    InvSqrt,
    Pow(f64),
}

/// `Q diag(f(λ)) Qᵀ`. Log, Sqrt and InvSqrt require strictly positive eigenvalues.
pub fn spectral_fn(a: &SymMat, f: SpectralFn) -> Result<SymMat> {
    let eig = eigh(a)?;
    let needs_positive = !matches!(f, SpectralFn::Exp | SpectralFn::Pow(_));
    let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if needs_positive && !(min > 0.0) {
        return Err(Error::DomainError(format!(
            "{f:?} needs positive eigenvalues, smallest is {min:e}"
        )));
    }
    if let SpectralFn::Pow(alpha) = f {
        if alpha.fract() != 0.0 && !(min > 0.0) {
            return Err(Error::DomainError(format!(
                "fractional power {alpha} of a matrix with eigenvalue {min:e}"
            )));
        }
    }
    Ok(match f {
        SpectralFn::Exp => eig.map(f64::exp),
        SpectralFn::Log => eig.map(f64::ln),
        SpectralFn::Sqrt => eig.map(f64::sqrt),
        SpectralFn::InvSqrt => eig.map(|v| 1.0 / v.sqrt()),
        SpectralFn::Pow(alpha) => eig.map(|v| v.powf(alpha)),
    })
}

/// Matrix exponential of a symmetric matrix, always SPD.
pub fn expm(a: &SymMat) -> Result<SpdMat> {
    let eig = eigh(a)?;
    let vals: Vec<f64> = eig.values.iter().map(|v| v.exp()).collect();
    SpdMat::from_spectrum(&eig.vectors, &vals)
}
