//! TOML configuration.
//!
//! Every CLI flag can also be set in a section named after its subcommand
//! (`[sample]`, `[classify.train]`, ...) or in `[global]`, with the flag name
//! as key (dashes or underscores). Values given on the command line win.
//! The `[experiment]` section describes an [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wrapped_spd::estimate::Strategy;
use wrapped_spd::CovKind;

use crate::error::{HarnessError, Result};
use crate::io::read_text;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    table: toml::Table,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::format(path, None, m),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        Ok(Settings { table })
    }

    /// The table at a dotted path such as `classify.train`.
    pub fn section(&self, path: &str) -> Option<&toml::Table> {
        let mut t = &self.table;
        for part in path.split('.') {
            t = t.get(part)?.as_table()?;
        }
        Some(t)
    }

    /// `key` from `section`, falling back to `[global]`.
    pub fn get<T: DeserializeOwned>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let alt = key.replace('-', "_");
        for sec in [section, "global"] {
            let Some(t) = self.section(sec) else { continue };
            if let Some(v) = t.get(key).or_else(|| t.get(&alt)) {
                return v
                    .clone()
                    .try_into()
                    .map(Some)
                    .map_err(|e| HarnessError::Config(format!("[{sec}] {key}: {e}")));
            }
        }
        Ok(None)
    }

    /// `cli` if given, else the configured value.
    pub fn pick<T: DeserializeOwned>(&self, cli: Option<T>, section: &str, key: &str) -> Result<Option<T>> {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(section, key),
        }
    }

    /// Like [`Settings::pick`] but the value must come from somewhere.
    pub fn require<T: DeserializeOwned>(&self, cli: Option<T>, section: &str, key: &str) -> Result<T> {
        self.pick(cli, section, key)?
            .ok_or_else(|| HarnessError::Argument(format!("missing --{key} (or `{key}` under [{section}] in the config)")))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let cfg = match self.table.get("experiment") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| HarnessError::Config(format!("[experiment]: {e}")))?,
            None => ExperimentConfig::default(),
        };
        Ok(cfg)
    }
}

/// Covariance structure as named on the command line and in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CovArg {
    Full,
    #[serde(alias = "diagonal")]
    #[value(alias = "diagonal")]
    Diag,
}

impl From<CovArg> for CovKind {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Full => CovKind::Full,
            CovArg::Diag => CovKind::Diagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Profile,
    Joint,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Profile => Strategy::Profile,
            StrategyArg::Joint => Strategy::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MleCurve,
    CvBenchmark,
    Sample,
    DensityEval,
}

/// A declarative experiment. Unset fields take the defaults of the
/// estimation protocol: `d = 2`, `N ∈ {100, 1000, 10000}`, seeds `0..5`,
/// full covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    /// Overrides `d` with a grid when nonempty.
    pub dims: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub cov_kind: CovArg,
    pub classifiers: Vec<String>,
    pub k_folds: usize,
    pub paths: BTreeMap<String, String>,
    pub strategy: StrategyArg,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::MleCurve,
            d: 2,
            dims: Vec::new(),
            n_grid: vec![100, 1000, 10000],
            seeds: (0..5).collect(),
            cov_kind: CovArg::Full,
            classifiers: ["mdm", "tslda", "tsqda", "howda", "hewda"].map(String::from).to_vec(),
            k_folds: 5,
            paths: BTreeMap::new(),
            strategy: StrategyArg::Profile,
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

impl ExperimentConfig {
    pub fn effective_dims(&self) -> Vec<usize> {
        if self.dims.is_empty() {
            vec![self.d]
        } else {
            self.dims.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.effective_dims().iter().any(|&d| d == 0) {
            return bad("dimensions must be at least 1");
        }
        if self.n_grid.is_empty() || self.seeds.is_empty() {
            return bad("n_grid and seeds must be nonempty");
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return bad("every N in n_grid must be at least 2");
        }
        if self.kind == ExperimentKind::CvBenchmark && self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        Ok(())
    }
}
