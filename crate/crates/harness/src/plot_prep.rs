//! Summary tables for plotting, from the CSV files written by `mle-curve`
//! and `cv`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{HarnessError, Result};

pub const MLE_SUMMARY_HEADER: &str = "d,N,metric,count,failed,median,q25,q75,mean,std";
pub const CV_SUMMARY_HEADER: &str = "model,metric,count,failed,median,q25,q75,mean,std";

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub failed: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64], failed: usize) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (mean, std) = crate::cv::mean_std(&v);
        Summary {
            count: v.len(),
            failed,
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
            mean,
            std,
        }
    }

    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.count, self.failed, self.median, self.q25, self.q75, self.mean, self.std
        )
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn parse_table(path: &Path, text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| HarnessError::format(path, Some(1), e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::format(path, Some(i + 2), e.to_string()))?;
        rows.push((i + 2, rec.iter().map(String::from).collect()));
    }
    Ok(Table { header, rows })
}

fn column(path: &Path, t: &Table, name: &str) -> Result<usize> {
    t.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::format(path, Some(1), format!("missing column {name:?}")))
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| HarnessError::format(path, Some(line), format!("not a number: {s:?}")))
}

/// Groups by `keys`, collecting `value` over rows whose `failed` flag is 0.
/// A NaN value without the failure flag is rejected.
fn group(path: &Path, t: &Table, keys: &[usize], value: usize, failed: usize) -> Result<BTreeMap<Vec<String>, (Vec<f64>, usize)>> {
    let mut groups: BTreeMap<Vec<String>, (Vec<f64>, usize)> = BTreeMap::new();
    for (line, row) in &t.rows {
        let cell = |i: usize| {
            row.get(i)
                .map(String::as_str)
                .ok_or_else(|| HarnessError::format(path, Some(*line), "too few columns"))
        };
        let key = keys.iter().map(|&k| cell(k).map(String::from)).collect::<Result<Vec<_>>>()?;
        let is_failed = cell(failed)? != "0";
        let entry = groups.entry(key).or_default();
        if is_failed {
            entry.1 += 1;
            continue;
        }
        let v: f64 = parse_num(path, *line, cell(value)?)?;
        if !v.is_finite() {
            return Err(HarnessError::format(path, Some(*line), "non-finite value in a row not flagged as failed"));
        }
        entry.0.push(v);
    }
    Ok(groups)
}

/// Per `(d, N, metric)` statistics of an `mle-curve` CSV, ordered by `d`
/// and `N` numerically.
pub fn summarize_mle_curve(path: &Path, text: &str) -> Result<String> {
    let t = parse_table(path, text)?;
    let keys = [column(path, &t, "d")?, column(path, &t, "N")?, column(path, &t, "metric")?];
    let groups = group(path, &t, &keys, column(path, &t, "value")?, column(path, &t, "failed")?)?;
    let mut entries = Vec::new();
    for (key, (vals, failed)) in groups {
        let d: usize = parse_num(path, 1, &key[0])?;
        let n: usize = parse_num(path, 1, &key[1])?;
        entries.push(((d, n, key[2].clone()), Summary::of(&vals, failed)));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from(MLE_SUMMARY_HEADER) + "\n";
    for ((d, n, metric), s) in entries {
        out.push_str(&format!("{d},{n},{metric},{}\n", s.csv_fields()));
    }
    Ok(out)
}

/// Per `(model, metric)` statistics over the fold rows of a `cv` CSV.
pub fn summarize_cv(path: &Path, text: &str) -> Result<String> {
    let mut t = parse_table(path, text)?;
    let fold = column(path, &t, "fold")?;
    t.rows.retain(|(_, r)| r.get(fold).is_some_and(|f| f.parse::<usize>().is_ok()));
    let keys = [column(path, &t, "model")?, column(path, &t, "metric")?];
    let groups = group(path, &t, &keys, column(path, &t, "value")?, column(path, &t, "failed")?)?;
    let mut out = String::from(CV_SUMMARY_HEADER) + "\n";
    for (key, (vals, failed)) in groups {
        out.push_str(&format!("{},{},{}\n", key[0], key[1], Summary::of(&vals, failed).csv_fields()));
    }
    Ok(out)
}

/// Detects the input kind from its header.
pub fn summarize(path: &Path, text: &str) -> Result<String> {
    let first = text.lines().next().unwrap_or("").trim();
    if first.starts_with("d,N,seed,metric") {
        summarize_mle_curve(path, text)
    } else if first.starts_with("model,fold,metric") {
        summarize_cv(path, text)
    } else {
        Err(HarnessError::format(path, Some(1), "not an mle-curve or cv CSV"))
    }
}
