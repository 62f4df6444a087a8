//! Wrapped Gaussian distributions on the manifold of symmetric positive
//! definite matrices under the affine-invariant metric.
//!
//! - [`symmat`]: symmetric eigendecomposition and spectral matrix functions
//! - [`airm`]: metric, distance, exp/log maps, vectorization, Karcher mean
//! - [`wgauss`]: sampling, exact densities, equivalence classes, transforms
//! - [`riemopt`]: Riemannian conjugate gradient on product manifolds
//! - [`estimate`]: likelihood, closed-form conditional estimates, MLE
//! - [`classify`]: MDM, tangent-space LDA/QDA and wrapped discriminant analysis

pub mod airm;
pub mod classify;
pub mod error;
pub mod estimate;
mod par;
pub mod riemopt;
pub mod symmat;
pub mod wgauss;

pub use airm::{BasePoint, TangentVec, VecCoord};
pub use error::{Error, Result};
pub use symmat::{SpdMat, SymMat};
pub use wgauss::{CovKind, CovSpec, WgParams};
