//! Dataset, parameter and model files.
//!
//! Datasets come in two encodings, chosen by file extension:
//! - `.jsonl`: a header `{"d": 2, "classes": 3}` then one
//!   `{"label": 0, "matrix": [[..], ..]}` per line
//! - `.csv`: one row per matrix, the label followed by the `d(d+1)/2`
//!   upper-triangular entries in row-major order, no header
//!
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wrapped_spd::airm::{coord_len, dim_from_coord_len};
use wrapped_spd::classify::{ClassifierModel, DaKind, LabeledSpdDataset, ModelVariant, TsdaCov};
use wrapped_spd::symmat::DEFAULT_EPS_PD;
use wrapped_spd::wgauss::minimal_representative;
use wrapped_spd::{CovSpec, SpdMat, SymMat, WgParams};

use crate::error::{HarnessError, Result};

/// Largest tolerated asymmetry, relative to `max(|a|∞, 1)`.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    JsonLines,
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl") | Some("json") => Ok(DataFormat::JsonLines),
            Some("csv") => Ok(DataFormat::Csv),
            _ => Err(HarnessError::format(path, None, "unknown dataset extension (expected .jsonl or .csv)")),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let d = rows.len();
    if d == 0 {
        return Err("empty matrix".into());
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(format!("matrix is not square ({d} rows, a row of length {})", r.len()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Parameter and model files only need positive eigenvalues, so that
/// anything the estimators produce, however ill-conditioned, reloads.
fn param_spd_from_rows(rows: &[Vec<f64>]) -> std::result::Result<SpdMat, String> {
    spd_from_rows_with(rows, 0.0)
}

fn spd_from_rows_with(rows: &[Vec<f64>], eps_rel: f64) -> std::result::Result<SpdMat, String> {
    let m = rows_to_matrix(rows)?;
    let s = SymMat::from_matrix_checked(m, SYMMETRY_TOL).map_err(|e| e.to_string())?;
    SpdMat::with_tolerance(s, eps_rel).map_err(|e| e.to_string())
}

fn upper_entries(x: &SpdMat) -> Vec<f64> {
    let d = x.dim();
    let mut out = Vec::with_capacity(coord_len(d));
    for i in 0..d {
        for j in i..d {
            out.push(x.as_matrix()[(i, j)]);
        }
    }
    out
}

fn spd_from_upper(d: usize, v: &[f64], eps_rel: f64) -> std::result::Result<SpdMat, String> {
    // Row-major upper triangle: row i starts after i(2d − i + 1)/2 entries.
    let s = SymMat::from_upper_fn(d, |i, j| v[i * (2 * d - i + 1) / 2 + (j - i)]);
    SpdMat::with_tolerance(s, eps_rel).map_err(|e| e.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d: usize,
    classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    label: usize,
    matrix: Vec<Vec<f64>>,
}

/// Loads with the default relative eigenvalue floor.
pub fn load_dataset(path: &Path) -> Result<LabeledSpdDataset> {
    load_dataset_with(path, DEFAULT_EPS_PD)
}

/// Every matrix must satisfy `λ_min > eps_rel · λ_max`.
pub fn load_dataset_with(path: &Path, eps_rel: f64) -> Result<LabeledSpdDataset> {
    let text = read_text(path)?;
    match DataFormat::from_path(path)? {
        DataFormat::JsonLines => parse_jsonl(path, &text, eps_rel),
        DataFormat::Csv => parse_csv(path, &text, eps_rel),
    }
}

fn parse_jsonl(path: &Path, text: &str, eps_rel: f64) -> Result<LabeledSpdDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines
        .next()
        .ok_or_else(|| HarnessError::format(path, None, "empty dataset file"))?;
    let header: Header = serde_json::from_str(htext)
        .map_err(|e| HarnessError::format(path, Some(hline + 1), format!("bad header: {e}")))?;
    if header.d == 0 || header.classes == 0 {
        return Err(HarnessError::format(path, Some(hline + 1), "header needs d >= 1 and classes >= 1"));
    }
    let mut items = Vec::new();
    for (idx, (lno, line)) in lines.enumerate() {
        let bad = |msg: String| HarnessError::format(path, Some(lno + 1), format!("record {idx}: {msg}"));
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.label >= header.classes {
            return Err(bad(format!("label {} outside 0..{}", rec.label, header.classes)));
        }
        if rec.matrix.len() != header.d {
            return Err(bad(format!("expected a {0}x{0} matrix, got {1} rows", header.d, rec.matrix.len())));
        }
        items.push((spd_from_rows_with(&rec.matrix, eps_rel).map_err(bad)?, rec.label));
    }
    if items.is_empty() {
        return Err(HarnessError::format(path, None, "dataset has no records"));
    }
    Ok(LabeledSpdDataset::new(items, Some(header.classes))?)
}

fn parse_csv(path: &Path, text: &str, eps_rel: f64) -> Result<LabeledSpdDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut items = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| HarnessError::format(path, e.position().map(|p| p.line() as usize), e.to_string()))?;
        let lno = row.position().map(|p| p.line() as usize);
        let bad = |msg: String| HarnessError::format(path, lno, format!("record {idx}: {msg}"));
        let label: usize = row
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad(format!("label {:?} is not a non-negative integer", row.get(0).unwrap_or(""))))?;
        let vals = row
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("{s:?} is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        let d = dim_from_coord_len(vals.len())
            .filter(|&d| d > 0)
            .ok_or_else(|| bad(format!("{} entries is not a triangular number", vals.len())))?;
        match dim {
            None => dim = Some(d),
            Some(d0) if d0 != d => return Err(bad(format!("matrix size {d} differs from the first record's {d0}"))),
            _ => {}
        }
        items.push((spd_from_upper(d, &vals, eps_rel).map_err(bad)?, label));
    }
    if items.is_empty() {
        return Err(HarnessError::format(path, None, "dataset has no records"));
    }
    Ok(LabeledSpdDataset::new(items, None)?)
}

pub fn dataset_to_string(data: &LabeledSpdDataset, format: DataFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        DataFormat::JsonLines => {
            let h = Header { d: data.dim(), classes: data.n_classes() };
            out.push_str(&serde_json::to_string(&h).expect("serializable"));
            out.push('\n');
            for (x, label) in data.items() {
                let r = Record { label: *label, matrix: matrix_rows(x.as_matrix()) };
                out.push_str(&serde_json::to_string(&r).expect("serializable"));
                out.push('\n');
            }
        }
        DataFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for (x, label) in data.items() {
                let mut row = vec![label.to_string()];
                row.extend(upper_entries(x).iter().map(|v| v.to_string()));
                w.write_record(&row).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        }
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, data: &LabeledSpdDataset) -> Result<()> {
    write_text(path, &dataset_to_string(data, DataFormat::from_path(path)?)?)
}

/// Unlabeled matrices saved as a one-class dataset.
pub fn save_matrices(path: &Path, xs: Vec<SpdMat>) -> Result<()> {
    let items = xs.into_iter().map(|x| (x, 0)).collect();
    save_dataset(path, &LabeledSpdDataset::new(items, Some(1))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaData {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
}

/// JSON form of [`WgParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub d: usize,
    pub p: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma_kind: String,
    pub sigma: SigmaData,
}

impl ParamsFile {
    pub fn from_params(theta: &WgParams) -> Self {
        let (sigma_kind, sigma) = match theta.sigma() {
            CovSpec::Full(s) => ("full", SigmaData::Matrix(matrix_rows(s.as_matrix()))),
            CovSpec::Diagonal(v) => ("diagonal", SigmaData::Vector(v.iter().copied().collect())),
        };
        ParamsFile {
            d: theta.dim(),
            p: matrix_rows(theta.p().as_matrix()),
            mu: theta.mu().iter().copied().collect(),
            sigma_kind: sigma_kind.into(),
            sigma,
        }
    }

    pub fn to_params(&self) -> std::result::Result<WgParams, String> {
        let p = param_spd_from_rows(&self.p).map_err(|e| format!("p: {e}"))?;
        if p.dim() != self.d {
            return Err(format!("p is {0}x{0} but d = {1}", p.dim(), self.d));
        }
        let n = coord_len(self.d);
        if self.mu.len() != n {
            return Err(format!("mu has {} entries, expected {n}", self.mu.len()));
        }
        let sigma = match (self.sigma_kind.as_str(), &self.sigma) {
            ("full", SigmaData::Matrix(rows)) => CovSpec::Full(param_spd_from_rows(rows).map_err(|e| format!("sigma: {e}"))?),
            ("diagonal", SigmaData::Vector(v)) => {
                CovSpec::diagonal(DVector::from_vec(v.clone())).map_err(|e| format!("sigma: {e}"))?
            }
            (k, _) => return Err(format!("sigma_kind {k:?} does not match the sigma data (full needs a matrix, diagonal a vector)")),
        };
        WgParams::new(p, DVector::from_vec(self.mu.clone()), sigma).map_err(|e| e.to_string())
    }
}

pub fn load_params(path: &Path) -> Result<WgParams> {
    let text = read_text(path)?;
    let pf: ParamsFile = serde_json::from_str(&text).map_err(|e| HarnessError::format(path, Some(e.line()), e.to_string()))?;
    pf.to_params().map_err(|m| HarnessError::format(path, None, m))
}

/// Writes the minimal representative of `theta`.
pub fn save_params(path: &Path, theta: &WgParams) -> Result<()> {
    write_text(path, &params_to_string(theta))
}

pub fn params_to_string(theta: &WgParams) -> String {
    let pf = ParamsFile::from_params(&minimal_representative(theta));
    serde_json::to_string_pretty(&pf).expect("serializable") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsdaCovFile {
    Shared(CovFile),
    PerClass(Vec<CovFile>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovFile {
    pub kind: String,
    pub sigma: SigmaData,
}

impl CovFile {
    fn from_cov(c: &CovSpec) -> Self {
        match c {
            CovSpec::Full(s) => CovFile { kind: "full".into(), sigma: SigmaData::Matrix(matrix_rows(s.as_matrix())) },
            CovSpec::Diagonal(v) => CovFile { kind: "diagonal".into(), sigma: SigmaData::Vector(v.iter().copied().collect()) },
        }
    }

    fn to_cov(&self) -> std::result::Result<CovSpec, String> {
        match (self.kind.as_str(), &self.sigma) {
            ("full", SigmaData::Matrix(rows)) => Ok(CovSpec::Full(param_spd_from_rows(rows)?)),
            ("diagonal", SigmaData::Vector(v)) => CovSpec::diagonal(DVector::from_vec(v.clone())).map_err(|e| e.to_string()),
            (k, _) => Err(format!("covariance kind {k:?} does not match its data")),
        }
    }
}

/// JSON form of a [`ClassifierModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelFile {
    Mdm {
        log_priors: Vec<f64>,
        class_means: Vec<Vec<Vec<f64>>>,
    },
    Tsda {
        log_priors: Vec<f64>,
        kind: String,
        diag: bool,
        base: Vec<Vec<f64>>,
        class_mu: Vec<Vec<f64>>,
        cov: TsdaCovFile,
    },
    Wda {
        log_priors: Vec<f64>,
        shared_sigma: bool,
        class_params: Vec<ParamsFile>,
    },
}

impl ModelFile {
    pub fn from_model(m: &ClassifierModel) -> Self {
        let log_priors = m.log_priors().to_vec();
        match m.variant() {
            ModelVariant::Mdm { class_means } => ModelFile::Mdm {
                log_priors,
                class_means: class_means.iter().map(|c| matrix_rows(c.as_matrix())).collect(),
            },
            ModelVariant::Tsda { base, class_mu, cov, kind, diag } => ModelFile::Tsda {
                log_priors,
                kind: match kind {
                    DaKind::Lda => "lda".into(),
                    DaKind::Qda => "qda".into(),
                },
                diag: *diag,
                base: matrix_rows(base.as_matrix()),
                class_mu: class_mu.iter().map(|m| m.iter().copied().collect()).collect(),
                cov: match cov {
                    TsdaCov::Shared(s) => TsdaCovFile::Shared(CovFile::from_cov(s)),
                    TsdaCov::PerClass(v) => TsdaCovFile::PerClass(v.iter().map(CovFile::from_cov).collect()),
                },
            },
            ModelVariant::Wda { class_params, shared_sigma } => ModelFile::Wda {
                log_priors,
                shared_sigma: *shared_sigma,
                class_params: class_params.iter().map(ParamsFile::from_params).collect(),
            },
        }
    }

    pub fn to_model(&self) -> std::result::Result<ClassifierModel, String> {
        let (variant, priors) = match self {
            ModelFile::Mdm { log_priors, class_means } => (
                ModelVariant::Mdm {
                    class_means: class_means.iter().map(|r| param_spd_from_rows(r)).collect::<std::result::Result<_, _>>()?,
                },
                log_priors,
            ),
            ModelFile::Tsda { log_priors, kind, diag, base, class_mu, cov } => (
                ModelVariant::Tsda {
                    base: param_spd_from_rows(base)?,
                    class_mu: class_mu.iter().map(|m| DVector::from_vec(m.clone())).collect(),
                    cov: match cov {
                        TsdaCovFile::Shared(c) => TsdaCov::Shared(c.to_cov()?),
                        TsdaCovFile::PerClass(v) => {
                            TsdaCov::PerClass(v.iter().map(CovFile::to_cov).collect::<std::result::Result<_, _>>()?)
                        }
                    },
                    kind: match kind.as_str() {
                        "lda" => DaKind::Lda,
                        "qda" => DaKind::Qda,
                        k => return Err(format!("unknown discriminant kind {k:?}")),
                    },
                    diag: *diag,
                },
                log_priors,
            ),
            ModelFile::Wda { log_priors, shared_sigma, class_params } => (
                ModelVariant::Wda {
                    class_params: class_params.iter().map(ParamsFile::to_params).collect::<std::result::Result<_, _>>()?,
                    shared_sigma: *shared_sigma,
                },
                log_priors,
            ),
        };
        ClassifierModel::new(variant, priors.clone()).map_err(|e| e.to_string())
    }
}

pub fn save_model(path: &Path, model: &ClassifierModel) -> Result<()> {
    let text = serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("serializable") + "\n";
    write_text(path, &text)
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = read_text(path)?;
    let mf: ModelFile = serde_json::from_str(&text).map_err(|e| HarnessError::format(path, Some(e.line()), e.to_string()))?;
    mf.to_model().map_err(|m| HarnessError::format(path, None, m))
}

/// A `T×m` numeric table, one observation per row. Lines starting with `#`
/// are skipped; a first row that does not parse as numbers is taken as a header.
pub fn load_series(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::format(path, e.position().map(|p| p.line() as usize), e.to_string()))?;
        let lno = rec.position().map(|p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(HarnessError::format(path, lno, format!("row {idx} has a non-numeric entry"))),
        }
    }
    let m = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || m == 0 {
        return Err(HarnessError::format(path, None, "series file has no numeric rows"));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(HarnessError::format(path, None, "series rows have differing lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}
