//! Stratified k-fold cross-validation of the classifiers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wrapped_spd::classify::{accuracy, fit_mdm, fit_tsda, fit_wda, ClassifierModel, DaKind, LabeledSpdDataset};
use wrapped_spd::estimate::MleOptions;
use wrapped_spd::{CovKind, Error};

use crate::error::{HarnessError, Result};
use crate::synth::derive_seed;

pub const CSV_HEADER: &str = "model,fold,metric,value,n_test,wall_time,failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Mdm,
    TsLda,
    TsQda,
    HoWda,
    HeWda,
}

/// A classifier name as accepted by the CLI: `mdm`, `tslda`, `tsqda`,
/// `howda`, `hewda`, the last four optionally suffixed `-diag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub diag: bool,
}

impl FromStr for ClassifierSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, diag) = match lower.strip_suffix("-diag") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let kind = match base {
            "mdm" => ClassifierKind::Mdm,
            "tslda" => ClassifierKind::TsLda,
            "tsqda" => ClassifierKind::TsQda,
            "howda" => ClassifierKind::HoWda,
            "hewda" => ClassifierKind::HeWda,
            _ => return Err(HarnessError::Argument(format!("unknown classifier {s:?}"))),
        };
        if diag && kind == ClassifierKind::Mdm {
            return Err(HarnessError::Argument("mdm has no diagonal variant".into()));
        }
        Ok(ClassifierSpec { kind, diag })
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            ClassifierKind::Mdm => "mdm",
            ClassifierKind::TsLda => "tslda",
            ClassifierKind::TsQda => "tsqda",
            ClassifierKind::HoWda => "howda",
            ClassifierKind::HeWda => "hewda",
        };
        write!(f, "{base}{}", if self.diag { "-diag" } else { "" })
    }
}

impl ClassifierSpec {
    /// `opts.cov_kind` is overridden by the diagonal flag.
    pub fn fit(&self, data: &LabeledSpdDataset, opts: &MleOptions) -> wrapped_spd::Result<ClassifierModel> {
        let opts = MleOptions {
            cov_kind: if self.diag { CovKind::Diagonal } else { CovKind::Full },
            ..opts.clone()
        };
        match self.kind {
            ClassifierKind::Mdm => fit_mdm(data),
            ClassifierKind::TsLda => fit_tsda(data, DaKind::Lda, self.diag),
            ClassifierKind::TsQda => fit_tsda(data, DaKind::Qda, self.diag),
            ClassifierKind::HoWda => fit_wda(data, true, &opts),
            ClassifierKind::HeWda => fit_wda(data, false, &opts),
        }
    }
}

pub fn parse_specs(names: &[String]) -> Result<Vec<ClassifierSpec>> {
    if names.is_empty() {
        return Err(HarnessError::Argument("no classifiers given".into()));
    }
    names.iter().map(|s| s.parse()).collect()
}

/// Fold index of every item. Members of each class are shuffled with a
/// seeded stream and dealt round-robin, each class starting where the
/// previous one stopped, so every fold holds `⌊n_k/k⌋` or `⌈n_k/k⌉` items of
/// class `k`. With `k = N` this is leave-one-out.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")).into());
    }
    if k == n {
        return Ok((0..n).collect());
    }
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {n} data points")).into());
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut folds = vec![0; n];
    let mut next = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            ))
            .into());
        }
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[class as u64])));
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub model: String,
    /// Fold index, or `mean` / `std` for the summary rows.
    pub fold: String,
    pub metric: String,
    /// NaN exactly when `failed`.
    pub value: f64,
    pub n_test: usize,
    pub wall_time: f64,
    pub failed: bool,
}

fn fold_row(spec: &ClassifierSpec, data: &LabeledSpdDataset, folds: &[usize], fold: usize, opts: &MleOptions, deterministic: bool) -> CvRow {
    let start = Instant::now();
    let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == fold).collect();
    let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != fold).collect();
    let outcome = (|| {
        let model = spec.fit(&data.subset(&train)?, opts)?;
        accuracy(&model, &data.subset(&test)?)
    })();
    let wall_time = if deterministic { 0.0 } else { start.elapsed().as_secs_f64() };
    let (value, failed) = match outcome {
        Ok(a) => (a, false),
        Err(e) => {
            log::warn!("{spec} fold {fold} failed: {e}");
            (f64::NAN, true)
        }
    };
    CvRow {
        model: spec.to_string(),
        fold: fold.to_string(),
        metric: "accuracy".into(),
        value,
        n_test: test.len(),
        wall_time,
        failed,
    }
}

/// Per-fold accuracy of every classifier, then its mean and sample
/// standard deviation over the folds that succeeded. Rows are grouped by
/// classifier in the order given, folds ascending.
pub fn run_cv(
    data: &LabeledSpdDataset,
    specs: &[ClassifierSpec],
    k: usize,
    seed: u64,
    opts: &MleOptions,
    deterministic: bool,
) -> Result<Vec<CvRow>> {
    let folds = stratified_folds(&data.labels(), k, seed)?;
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|s| (0..k).map(move |f| (s, f))).collect();
    let fold_rows: Vec<CvRow> = jobs
        .par_iter()
        .map(|&(s, f)| fold_row(&specs[s], data, &folds, f, opts, deterministic))
        .collect();
    let mut rows = Vec::with_capacity(fold_rows.len() + 2 * specs.len());
    for chunk in fold_rows.chunks(k) {
        let ok: Vec<f64> = chunk.iter().filter(|r| !r.failed).map(|r| r.value).collect();
        let (mean, std) = mean_std(&ok);
        let wall: f64 = chunk.iter().map(|r| r.wall_time).sum();
        let model = chunk[0].model.clone();
        rows.extend_from_slice(chunk);
        for (fold, value) in [("mean", mean), ("std", std)] {
            rows.push(CvRow {
                model: model.clone(),
                fold: fold.into(),
                metric: "accuracy".into(),
                value,
                n_test: data.len(),
                wall_time: wall,
                failed: !value.is_finite(),
            });
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation; the std of a single value is 0 and
/// both are NaN for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn rows_to_csv(rows: &[CvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model, r.fold, r.metric, r.value, r.n_test, r.wall_time, u8::from(r.failed)
        ));
    }
    out
}
