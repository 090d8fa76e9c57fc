use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{max_drop, mean_std, Attribute, Representation, Task};
use crate::models::ModelFamily;
use crate::{Error, Result};

/// Written to `summary.csv` so readers know how `stderr` was obtained.
pub const STDERR_METHOD: &str = "stratified_bootstrap_v1";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub task: Task,
    pub representation: Representation,
    pub model: ModelFamily,
    pub regime: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct YearResult {
    pub test_year: i32,
    pub auroc: f64,
    pub stderr: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// One held-out fold of a year-agnostic run (1-based repeat and fold).
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub auroc: f64,
    pub stderr: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// `metric` is `(auroc, stderr)`, or `None` when the group is flagged unstable.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupResult {
    pub test_year: i32,
    pub attribute: Attribute,
    pub value: String,
    pub n_train: usize,
    pub n_test: usize,
    pub metric: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skip {
    pub test_year: Option<i32>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub key: CellKey,
    /// Sorted by test year.
    pub years: Vec<YearResult>,
    pub folds: Vec<FoldResult>,
    pub subgroups: Vec<SubgroupResult>,
    pub skipped: Vec<Skip>,
    /// `(name, text)` pairs of serialized training artifacts, when requested.
    pub artifacts: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(key: CellKey) -> Self {
        Self {
            key,
            years: Vec::new(),
            folds: Vec::new(),
            subgroups: Vec::new(),
            skipped: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Mean and population std of AUROC over test years, or over folds for a
    /// year-agnostic report.
    pub fn average_auroc(&self) -> Option<(f64, f64)> {
        let values: Vec<f64> = if self.folds.is_empty() {
            self.years.iter().map(|y| y.auroc).collect()
        } else {
            self.folds.iter().map(|f| f.auroc).collect()
        };
        (!values.is_empty()).then(|| mean_std(&values))
    }

    pub fn max_drop(&self) -> Option<f64> {
        max_drop(&self.years.iter().map(|y| y.auroc).collect::<Vec<_>>())
    }

    pub fn year(&self, test_year: i32) -> Option<&YearResult> {
        self.years.iter().find(|y| y.test_year == test_year)
    }

    pub fn metric_rows(&self) -> Vec<MetricsRow> {
        let base = |test_year: Option<i32>| MetricsRow {
            task: self.key.task.to_string(),
            representation: self.key.representation.to_string(),
            model: self.key.model.to_string(),
            regime: self.key.regime.clone(),
            test_year,
            auroc: None,
            stderr: None,
            n_train: 0,
            n_test: 0,
            subgroup: "all".into(),
            subgroup_value: "all".into(),
            flag: String::new(),
        };
        let mut rows = Vec::new();
        for s in self.skipped.iter().filter(|s| s.test_year.is_none()) {
            rows.push(MetricsRow {
                flag: format!("skipped: {}", s.reason),
                ..base(None)
            });
        }
        for f in &self.folds {
            rows.push(MetricsRow {
                auroc: Some(f.auroc),
                stderr: Some(f.stderr),
                n_train: f.n_train,
                n_test: f.n_test,
                subgroup: "fold".into(),
                subgroup_value: format!("{}.{}", f.repeat, f.fold),
                ..base(None)
            });
        }
        let mut years: Vec<i32> = self.years.iter().map(|y| y.test_year).collect();
        years.extend(self.skipped.iter().filter_map(|s| s.test_year));
        years.sort_unstable();
        years.dedup();
        for year in years {
            if let Some(y) = self.year(year) {
                rows.push(MetricsRow {
                    auroc: Some(y.auroc),
                    stderr: Some(y.stderr),
                    n_train: y.n_train,
                    n_test: y.n_test,
                    ..base(Some(year))
                });
            }
            for s in self.skipped.iter().filter(|s| s.test_year == Some(year)) {
                rows.push(MetricsRow {
                    flag: format!("skipped: {}", s.reason),
                    ..base(Some(year))
                });
            }
            for g in self.subgroups.iter().filter(|g| g.test_year == year) {
                rows.push(MetricsRow {
                    auroc: g.metric.map(|m| m.0),
                    stderr: g.metric.map(|m| m.1),
                    n_train: g.n_train,
                    n_test: g.n_test,
                    subgroup: g.attribute.as_str().into(),
                    subgroup_value: g.value.clone(),
                    flag: if g.metric.is_none() { "unstable".into() } else { String::new() },
                    ..base(Some(year))
                });
            }
        }
        rows
    }
}

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub task: String,
    pub representation: String,
    pub model: String,
    pub regime: String,
    pub test_year: Option<i32>,
    pub auroc: Option<f64>,
    pub stderr: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub subgroup: String,
    pub subgroup_value: String,
    pub flag: String,
}

impl MetricsRow {
    pub fn cell(&self) -> (String, String, String, String) {
        (
            self.task.clone(),
            self.representation.clone(),
            self.model.clone(),
            self.regime.clone(),
        )
    }

    /// Whole-population result of one test year.
    pub fn is_year_result(&self) -> bool {
        self.subgroup == "all" && self.test_year.is_some() && self.auroc.is_some()
    }

    pub fn is_fold_result(&self) -> bool {
        self.subgroup == "fold" && self.auroc.is_some()
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub representation: String,
    pub model: String,
    pub regime: String,
    pub average_auroc_mean: Option<f64>,
    pub average_auroc_std: Option<f64>,
    pub max_drop: Option<f64>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub stderr_method: String,
}

/// Per-cell summaries recomputed from metric rows, in first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut cells: BTreeMap<_, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let key = r.cell();
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &cells[&key];
            let mut years: Vec<(i32, f64)> = rs
                .iter()
                .filter(|r| r.is_year_result())
                .filter_map(|r| Some((r.test_year?, r.auroc?)))
                .collect();
            years.sort_by_key(|y| y.0);
            let folds: Vec<f64> = rs.iter().filter(|r| r.is_fold_result()).filter_map(|r| r.auroc).collect();
            let series: Vec<f64> = years.iter().map(|y| y.1).collect();
            let values = if folds.is_empty() { &series } else { &folds };
            let avg = (!values.is_empty()).then(|| mean_std(values));
            SummaryRow {
                task: key.0,
                representation: key.1,
                model: key.2,
                regime: key.3,
                average_auroc_mean: avg.map(|a| a.0),
                average_auroc_std: avg.map(|a| a.1),
                max_drop: max_drop(&series),
                n_evaluated: values.len(),
                n_skipped: rs.iter().filter(|r| r.flag.starts_with("skipped")).count(),
                stderr_method: STDERR_METHOD.into(),
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub const METRICS_HEADER: [&str; 12] = [
    "task",
    "representation",
    "model",
    "regime",
    "test_year",
    "auroc",
    "stderr",
    "n_train",
    "n_test",
    "subgroup",
    "subgroup_value",
    "flag",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "task",
    "representation",
    "model",
    "regime",
    "average_auroc_mean",
    "average_auroc_std",
    "max_drop",
    "n_evaluated",
    "n_skipped",
    "stderr_method",
];

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, rows, &METRICS_HEADER)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path, rows, &SUMMARY_HEADER)
}

/// Parses `metrics.csv` text. Errors name the file line and column.
pub fn parse_metrics(text: &str, file: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| schema(file, 1, "", e.to_string()))?.clone();
    if headers.iter().ne(METRICS_HEADER) {
        return Err(schema(file, 1, "", format!("expected header `{}`", METRICS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<MetricsRow>() {
        match rec {
            Ok(row) => {
                if let Some(a) = row.auroc.filter(|a| !(0.0..=1.0).contains(a)) {
                    return Err(schema(file, rows.len() as u64 + 2, "auroc", format!("{a} outside [0, 1]")));
                }
                rows.push(row)
            }
            Err(e) => {
                let line = e.position().map_or(rows.len() as u64 + 2, |p| p.line());
                let column = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err
                        .field()
                        .and_then(|f| METRICS_HEADER.get(f as usize))
                        .copied()
                        .unwrap_or(""),
                    _ => "",
                };
                return Err(schema(file, line, column, e.to_string()));
            }
        }
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, &path.display().to_string())
}

fn schema(file: &str, line: u64, column: &str, message: String) -> Error {
    Error::Schema {
        file: file.to_string(),
        line,
        column: column.to_string(),
        message,
    }
}
