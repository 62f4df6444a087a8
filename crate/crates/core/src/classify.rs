//! Maximum-likelihood classifiers on SPD matrices.
//!
//! Every model scores a point per class and predicts the argmax, ties going
//! to the smallest label:
//! - MDM: `−δ(x, ḡₖ)²/2` with `ḡₖ` the class Karcher mean (priors ignored)
//! - TS-LDA/QDA: normal log-density of `Vect_𝔊 Log_𝔊 x` at the global mean
//!   `𝔊`, plus the log-prior; the common Jacobian term is dropped
//! - WDA: full wrapped Gaussian log-density per class, plus the log-prior

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::airm::{coord_len, dist_from, BasePoint};
use crate::error::{Error, Result};
use crate::estimate::{cov_from_raw, fit_mle, karcher_or_last, mean_of, regularize_covariance, scatter, MleOptions, TangentData};
use crate::riemopt::{minimize_cg, CgOptions, PowerManifold, SpdManifold};
use crate::symmat::SpdMat;
use crate::wgauss::{minimal_representative, CovKind, CovSpec, DensityEvaluator, EcGenerator, MvnKernel, WgParams};

/// Labeled SPD matrices sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSpdDataset {
    items: Vec<(SpdMat, usize)>,
    dim: usize,
    n_classes: usize,
}

impl LabeledSpdDataset {
    /// `n_classes = None` infers `K` as one more than the largest label.
    pub fn new(items: Vec<(SpdMat, usize)>, n_classes: Option<usize>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
        let dim = first.0.dim();
        let max_label = items.iter().map(|(_, l)| *l).max().unwrap_or(0);
        let k = n_classes.unwrap_or(max_label + 1);
        for (i, (x, l)) in items.iter().enumerate() {
            if x.dim() != dim {
                return Err(Error::InvalidInput(format!(
                    "record {i}: matrix is {}x{}, expected {dim}x{dim}",
                    x.dim(),
                    x.dim()
                )));
            }
            if *l >= k {
                return Err(Error::InvalidInput(format!("record {i}: label {l} is not below {k}")));
            }
        }
        Ok(LabeledSpdDataset { items, dim, n_classes: k })
    }

    pub fn items(&self) -> &[(SpdMat, usize)] {
        &self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    pub fn matrices(&self) -> Vec<SpdMat> {
        self.items.iter().map(|(x, _)| x.clone()).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for (_, l) in &self.items {
            c[*l] += 1;
        }
        c
    }

    /// Members of each class, in dataset order.
    pub fn by_class(&self) -> Vec<Vec<SpdMat>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (x, l) in &self.items {
            out[*l].push(x.clone());
        }
        out
    }

    /// The records at `indices`, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let items = indices.iter().map(|&i| self.items[i].clone()).collect();
        Self::new(items, Some(self.n_classes))
    }

    fn require_nonempty_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(k) => Err(Error::InvalidInput(format!("class {k} has no training points"))),
            None => Ok(()),
        }
    }

    fn empirical_log_priors(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().iter().map(|&c| (c as f64 / n).ln()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DaKind {
    Lda,
    Qda,
}

/// Tangent-space covariance: one shared (LDA) or one per class (QDA).
#[derive(Debug, Clone, PartialEq)]
pub enum TsdaCov {
    Shared(CovSpec),
    PerClass(Vec<CovSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelVariant {
    Mdm {
        class_means: Vec<SpdMat>,
    },
    Tsda {
        base: SpdMat,
        class_mu: Vec<DVector<f64>>,
        cov: TsdaCov,
        kind: DaKind,
        diag: bool,
    },
    Wda {
        class_params: Vec<WgParams>,
        shared_sigma: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    variant: ModelVariant,
    log_priors: Vec<f64>,
}

impl ClassifierModel {
    /// Validates shapes and that the priors are log-probabilities.
    pub fn new(variant: ModelVariant, log_priors: Vec<f64>) -> Result<Self> {
        let k = match &variant {
            ModelVariant::Mdm { class_means } => {
                check_same_dim(class_means.iter().map(|m| m.dim()))?;
                class_means.len()
            }
            ModelVariant::Tsda { base, class_mu, cov, .. } => {
                let n = coord_len(base.dim());
                if let Some(m) = class_mu.iter().find(|m| m.len() != n) {
                    return Err(Error::dim(n, m.len()));
                }
                let covs: Vec<&CovSpec> = match cov {
                    TsdaCov::Shared(s) => vec![s],
                    TsdaCov::PerClass(v) => {
                        if v.len() != class_mu.len() {
                            return Err(Error::InvalidInput("one covariance per class required".into()));
                        }
                        v.iter().collect()
                    }
                };
                for s in covs {
                    if s.dim() != n {
                        return Err(Error::dim(n, s.dim()));
                    }
                    s.validate()?;
                }
                class_mu.len()
            }
            ModelVariant::Wda { class_params, .. } => {
                check_same_dim(class_params.iter().map(|t| t.dim()))?;
                class_params.len()
            }
        };
        if k == 0 {
            return Err(Error::InvalidInput("model has no classes".into()));
        }
        if log_priors.len() != k {
            return Err(Error::dim(k, log_priors.len()));
        }
        let total: f64 = log_priors.iter().map(|v| v.exp()).sum();
        if log_priors.iter().any(|v| v.is_nan() || *v > 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("log_priors are not a log probability vector".into()));
        }
        Ok(ClassifierModel { variant, log_priors })
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn n_classes(&self) -> usize {
        self.log_priors.len()
    }

    pub fn dim(&self) -> usize {
        match &self.variant {
            ModelVariant::Mdm { class_means } => class_means[0].dim(),
            ModelVariant::Tsda { base, .. } => base.dim(),
            ModelVariant::Wda { class_params, .. } => class_params[0].dim(),
        }
    }

    pub fn with_uniform_priors(mut self) -> Self {
        let k = self.log_priors.len();
        self.log_priors = vec![-(k as f64).ln(); k];
        self
    }

    pub fn with_log_priors(self, log_priors: Vec<f64>) -> Result<Self> {
        Self::new(self.variant, log_priors)
    }

    /// The WDA model whose classes all sit at the tangent-space model's base
    /// point, sharing its covariance for LDA.
    pub fn wda_from_tsda(&self) -> Result<ClassifierModel> {
        let ModelVariant::Tsda { base, class_mu, cov, .. } = &self.variant else {
            return Err(Error::InvalidInput("not a tangent-space model".into()));
        };
        let (params, shared) = match cov {
            TsdaCov::Shared(s) => (
                class_mu
                    .iter()
                    .map(|m| WgParams::new(base.clone(), m.clone(), s.clone()))
                    .collect::<Result<Vec<_>>>()?,
                true,
            ),
            TsdaCov::PerClass(v) => (
                class_mu
                    .iter()
                    .zip(v)
                    .map(|(m, s)| WgParams::new(base.clone(), m.clone(), s.clone()))
                    .collect::<Result<Vec<_>>>()?,
                false,
            ),
        };
        ClassifierModel::new(
            ModelVariant::Wda { class_params: params, shared_sigma: shared },
            self.log_priors.clone(),
        )
    }

    fn scorer(&self) -> Result<Scorer> {
        Ok(match &self.variant {
            ModelVariant::Mdm { class_means } => {
                Scorer::Mdm(class_means.iter().map(BasePoint::new).collect::<Result<_>>()?)
            }
            ModelVariant::Tsda { base, class_mu, cov, .. } => {
                let kernels = class_mu
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let s = match cov {
                            TsdaCov::Shared(s) => s,
                            TsdaCov::PerClass(v) => &v[k],
                        };
                        MvnKernel::new(m.clone(), s)
                    })
                    .collect::<Result<_>>()?;
                Scorer::Tsda(BasePoint::new(base)?, kernels)
            }
            ModelVariant::Wda { class_params, .. } => Scorer::Wda(
                class_params
                    .iter()
                    .map(DensityEvaluator::gaussian)
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn check_input(&self, x: &SpdMat) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::dim(self.dim(), x.dim()));
        }
        Ok(())
    }

    /// Unnormalized per-class log scores.
    pub fn predict_scores(&self, x: &SpdMat) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.scorer()?.scores(x, &self.log_priors)
    }

    pub fn predict(&self, x: &SpdMat) -> Result<usize> {
        Ok(argmax(&self.predict_scores(x)?))
    }

    /// Scores normalized by log-sum-exp.
    pub fn predict_log_proba(&self, x: &SpdMat) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.predict_scores(x)?))
    }

    pub fn predict_scores_batch(&self, xs: &[SpdMat]) -> Result<Vec<Vec<f64>>> {
        if let Some(x) = xs.iter().find(|x| x.dim() != self.dim()) {
            return Err(Error::dim(self.dim(), x.dim()));
        }
        let scorer = self.scorer()?;
        xs.par_iter().map(|x| scorer.scores(x, &self.log_priors)).collect()
    }

    pub fn predict_batch(&self, xs: &[SpdMat]) -> Result<Vec<usize>> {
        Ok(self.predict_scores_batch(xs)?.iter().map(|s| argmax(s)).collect())
    }
}

fn check_same_dim(dims: impl Iterator<Item = usize>) -> Result<()> {
    let dims: Vec<usize> = dims.collect();
    if let Some(&d0) = dims.first() {
        if let Some(&bad) = dims.iter().find(|&&d| d != d0) {
            return Err(Error::dim(d0, bad));
        }
    }
    Ok(())
}

enum Scorer {
    Mdm(Vec<BasePoint>),
    Tsda(BasePoint, Vec<MvnKernel>),
    Wda(Vec<DensityEvaluator>),
}

impl Scorer {
    fn scores(&self, x: &SpdMat, log_priors: &[f64]) -> Result<Vec<f64>> {
        match self {
            Scorer::Mdm(means) => means
                .iter()
                .map(|m| Ok(-0.5 * dist_from(m, x)?.powi(2)))
                .collect(),
            Scorer::Tsda(base, kernels) => {
                let t = base.unwrap(x)?;
                Ok(kernels
                    .iter()
                    .zip(log_priors)
                    .map(|(k, lp)| k.log_density_ec(&t, EcGenerator::Gaussian) + lp)
                    .collect())
            }
            Scorer::Wda(evals) => evals
                .iter()
                .zip(log_priors)
                .map(|(e, lp)| Ok(e.log_density(x)? + lp))
                .collect(),
        }
    }
}

/// First index of the largest score; NaN never wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] || scores[best].is_nan() {
            best = k;
        }
    }
    best
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

fn class_error(class: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Class { class, source: Box::new(e) }
}

/// Minimum distance to the class Karcher means.
pub fn fit_mdm(data: &LabeledSpdDataset) -> Result<ClassifierModel> {
    data.require_nonempty_classes()?;
    let class_means = data
        .by_class()
        .par_iter()
        .enumerate()
        .map(|(k, xs)| karcher_or_last(xs).map_err(class_error(k)))
        .collect::<Result<Vec<_>>>()?;
    ClassifierModel::new(ModelVariant::Mdm { class_means }, data.empirical_log_priors())
}

fn cov_or_regularized(mu: &DVector<f64>, raw: nalgebra::DMatrix<f64>, kind: CovKind, what: &str) -> Result<CovSpec> {
    match cov_from_raw(mu, raw, kind) {
        Err(Error::SingularCovariance { sigma, .. }) => {
            log::warn!("{what}: singular covariance regularized by 1e-8 tr(Σ)/n");
            regularize_covariance(&sigma, kind)
        }
        other => other,
    }
}

/// Tangent-space LDA/QDA at the global Karcher mean.
pub fn fit_tsda(data: &LabeledSpdDataset, kind: DaKind, diag: bool) -> Result<ClassifierModel> {
    data.require_nonempty_classes()?;
    let base = karcher_or_last(&data.matrices())?;
    let td = TangentData::at(&base, &data.matrices())?;
    let labels = data.labels();
    let mut groups: Vec<Vec<DVector<f64>>> = vec![Vec::new(); data.n_classes()];
    for (t, l) in td.coords.into_iter().zip(&labels) {
        groups[*l].push(t);
    }
    let class_mu: Vec<DVector<f64>> = groups.iter().map(|g| mean_of(g)).collect();
    let cov_kind = if diag { CovKind::Diagonal } else { CovKind::Full };
    let n = coord_len(data.dim());
    let cov = match kind {
        DaKind::Lda => {
            let mut pooled = nalgebra::DMatrix::zeros(n, n);
            for (g, m) in groups.iter().zip(&class_mu) {
                pooled += scatter(g, m);
            }
            pooled /= data.len() as f64;
            TsdaCov::Shared(cov_or_regularized(&DVector::zeros(n), pooled, cov_kind, "pooled covariance")?)
        }
        DaKind::Qda => TsdaCov::PerClass(
            groups
                .iter()
                .zip(&class_mu)
                .enumerate()
                .map(|(k, (g, m))| {
                    let raw = scatter(g, m) / g.len() as f64;
                    cov_or_regularized(m, raw, cov_kind, &format!("class {k}"))
                })
                .collect::<Result<_>>()?,
        ),
    };
    ClassifierModel::new(
        ModelVariant::Tsda { base, class_mu, cov, kind, diag },
        data.empirical_log_priors(),
    )
}

/// Wrapped discriminant analysis. `shared_sigma = false` fits each class
/// by [`fit_mle`]; `shared_sigma = true` fits one covariance for all
/// classes by block-coordinate descent (see [`fit_ho_wda`]).
pub fn fit_wda(data: &LabeledSpdDataset, shared_sigma: bool, opts: &MleOptions) -> Result<ClassifierModel> {
    if shared_sigma {
        return Ok(fit_ho_wda(data, opts)?.0);
    }
    data.require_nonempty_classes()?;
    let class_params = data
        .by_class()
        .par_iter()
        .enumerate()
        .map(|(k, xs)| fit_mle(xs, opts).map(|(t, _)| t).map_err(class_error(k)))
        .collect::<Result<Vec<_>>>()?;
    ClassifierModel::new(
        ModelVariant::Wda { class_params, shared_sigma: false },
        data.empirical_log_priors(),
    )
}

const HO_WDA_MAX_ROUNDS: usize = 20;

/// Homogeneous WDA. Alternates between (a) profiled CG over each class
/// base `p_k` with `Σ` fixed and `μ_k` the class tangent mean, and (b) the
/// pooled residual covariance given all `(p_k, μ_k)`. The alternation stops
/// when no class base moves, when the joint cost stalls, or after a fixed
/// number of rounds. Alternation crawls along flat valleys, so a final CG
/// over all bases at once, with `(μ_k, Σ)` profiled out, brings the joint
/// gradient below `opts.tol`.
///
/// Also returns the joint negative log-likelihood after each round, the
/// last entry being the value after the final joint step.
pub fn fit_ho_wda(data: &LabeledSpdDataset, opts: &MleOptions) -> Result<(ClassifierModel, Vec<f64>)> {
    data.require_nonempty_classes()?;
    let classes = data.by_class();
    let n_total = data.len() as f64;
    let n = coord_len(data.dim());
    let kind = opts.cov_kind;
    let cg = CgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..CgOptions::default()
    };

    let mut bases = classes
        .par_iter()
        .enumerate()
        .map(|(k, xs)| karcher_or_last(xs).map_err(class_error(k)))
        .collect::<Result<Vec<_>>>()?;

    let regularized = AtomicBool::new(false);
    let pooled = |bases: &[SpdMat]| -> Result<(Vec<TangentData>, Vec<DVector<f64>>, CovSpec)> {
        let tds = bases
            .iter()
            .zip(&classes)
            .map(|(p, xs)| TangentData::at(p, xs))
            .collect::<Result<Vec<_>>>()?;
        let mus: Vec<DVector<f64>> = tds.iter().map(|t| t.mean()).collect();
        let mut s = nalgebra::DMatrix::zeros(n, n);
        for (td, m) in tds.iter().zip(&mus) {
            s += scatter(&td.coords, m);
        }
        s /= n_total;
        let sigma = match cov_from_raw(&DVector::zeros(n), s, kind) {
            Err(Error::SingularCovariance { sigma, .. }) => {
                regularized.store(true, Ordering::Relaxed);
                regularize_covariance(&sigma, kind)?
            }
            other => other?,
        };
        Ok((tds, mus, sigma))
    };
    let joint_cost = |tds: &[TangentData], mus: &[DVector<f64>], sigma: &CovSpec| -> Result<f64> {
        let mut total = 0.0;
        for (td, m) in tds.iter().zip(mus) {
            let kern = MvnKernel::new(m.clone(), sigma)?;
            let g: f64 = td.coords.iter().map(|t| kern.log_density_ec(t, EcGenerator::Gaussian)).sum();
            total += td.log_jac_sum() - g;
        }
        Ok(total)
    };

    let (tds, _, mut sigma) = pooled(&bases)?;
    let mut trace = vec![joint_cost(&tds, &tds.iter().map(|t| t.mean()).collect::<Vec<_>>(), &sigma)?];
    for _ in 0..HO_WDA_MAX_ROUNDS {
        let fixed = sigma.clone();
        let results = classes
            .par_iter()
            .zip(bases.par_iter())
            .enumerate()
            .map(|(k, (xs, p0))| {
                let cost = |p: &SpdMat| -> Result<f64> {
                    let td = TangentData::at(p, xs)?;
                    let kern = MvnKernel::new(td.mean(), &fixed)?;
                    let g: f64 = td.coords.iter().map(|t| kern.log_density_ec(t, EcGenerator::Gaussian)).sum();
                    Ok((td.log_jac_sum() - g) / td.len() as f64)
                };
                minimize_cg(&SpdManifold, cost, None, p0.clone(), &cg).map_err(class_error(k))
            })
            .collect::<Result<Vec<_>>>()?;
        let stationary = results.iter().all(|(_, r)| r.iterations == 0 && r.converged);
        bases = results.into_iter().map(|(p, _)| p).collect();
        let (tds, m, s) = pooled(&bases)?;
        let c = joint_cost(&tds, &m, &s)?;
        let prev = *trace.last().expect("nonempty");
        sigma = s;
        trace.push(c);
        if stationary || (prev - c).abs() <= 1e-12 * prev.abs().max(1.0) {
            break;
        }
    }

    let cost = |ps: &Vec<SpdMat>| -> Result<f64> {
        let (tds, m, s) = pooled(ps)?;
        Ok(joint_cost(&tds, &m, &s)? / n_total)
    };
    let (polished, report) = minimize_cg(&PowerManifold(SpdManifold), cost, None, bases, &cg)?;
    if !report.converged && opts.max_iter > 0 {
        log::warn!(
            "Ho-WDA stopped after {} joint iterations with gradient norm {:e}",
            report.iterations,
            report.grad_norm
        );
    }
    let (tds, mus, sigma) = pooled(&polished)?;
    trace.push(joint_cost(&tds, &mus, &sigma)?);
    if regularized.load(Ordering::Relaxed) {
        log::warn!("shared covariance: singular estimate regularized by 1e-8 tr(Σ)/n");
    }

    let class_params = polished
        .into_iter()
        .zip(mus)
        .map(|(p, m)| WgParams::new(p, m, sigma.clone()).map(|t| minimal_representative(&t)))
        .collect::<Result<Vec<_>>>()?;
    let model = ClassifierModel::new(
        ModelVariant::Wda { class_params, shared_sigma: true },
        data.empirical_log_priors(),
    )?;
    Ok((model, trace))
}

/// Fraction of correct predictions.
pub fn accuracy(model: &ClassifierModel, data: &LabeledSpdDataset) -> Result<f64> {
    let pred = model.predict_batch(&data.matrices())?;
    let hits = pred.iter().zip(data.labels()).filter(|(a, b)| **a == *b).count();
    Ok(hits as f64 / data.len() as f64)
}
