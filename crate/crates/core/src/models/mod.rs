//! Classifiers over flattened stays: L1/L2 logistic regression, a binned
//! random forest, and random-search tuning under stratified cross-validation.

mod lr;
mod rf;
mod search;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use lr::{train_lr, train_lr_traced, LrConfig, LrModel, Penalty};
pub use rf::{train_rf, train_rf_binned, BinnedMatrix, Node, RfConfig, RfModel, Tree};
pub use search::{
    draw_configs, random_search, search_configs, stratified_folds, LrSpace, RfSpace, SearchResult,
    SearchSpec,
};

/// One stay as a single feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatExample {
    pub stay_id: u32,
    pub features: Vec<f32>,
    pub label: bool,
}

/// Row-major design matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatDataset {
    pub columns: Arc<[String]>,
    pub stay_ids: Vec<u32>,
    pub labels: Vec<bool>,
    x: Vec<f32>,
}

impl FlatDataset {
    pub fn new(
        columns: Arc<[String]>,
        stay_ids: Vec<u32>,
        labels: Vec<bool>,
        x: Vec<f32>,
    ) -> Result<Self> {
        let d = columns.len();
        if stay_ids.len() != labels.len() || x.len() != stay_ids.len() * d {
            return Err(Error::DimensionMismatch {
                expected: stay_ids.len() * d,
                actual: x.len(),
            });
        }
        Ok(Self {
            columns,
            stay_ids,
            labels,
            x,
        })
    }

    pub fn from_examples(columns: Arc<[String]>, examples: &[FlatExample]) -> Result<Self> {
        let d = columns.len();
        let mut x = Vec::with_capacity(examples.len() * d);
        for e in examples {
            if e.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: e.features.len(),
                });
            }
            x.extend_from_slice(&e.features);
        }
        Self::new(
            columns,
            examples.iter().map(|e| e.stay_id).collect(),
            examples.iter().map(|e| e.label).collect(),
            x,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.stay_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.x[i * self.dim() + j]
    }

    pub fn example(&self, i: usize) -> FlatExample {
        FlatExample {
            stay_id: self.stay_ids[i],
            features: self.row(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    /// Copy with the columns reordered by `perm` (new column `j` is old `perm[j]`).
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let columns: Arc<[String]> = perm.iter().map(|&j| self.columns[j].clone()).collect();
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            x.extend(perm.iter().map(|&j| row[j]));
        }
        Self {
            columns,
            stay_ids: self.stay_ids.clone(),
            labels: self.labels.clone(),
            x,
        }
    }

    /// Positions of `ids` in this dataset, failing on the first missing id.
    pub(crate) fn positions(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Artifact(format!("feature column `{id}` missing from input")))
            })
            .collect()
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }

    /// Column positions sorted by id, skipping columns constant over `rows`.
    pub(crate) fn informative_columns(&self, rows: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..self.dim())
            .filter(|&j| {
                let Some(&first) = rows.first() else {
                    return false;
                };
                let v = self.get(first, j);
                rows.iter().any(|&i| self.get(i, j) != v)
            })
            .collect();
        cols.sort_by(|&a, &b| self.columns[a].cmp(&self.columns[b]));
        cols
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Lr,
    Rf,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Lr => "lr",
            ModelFamily::Rf => "rf",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ModelFamily::Lr),
            "rf" => Ok(ModelFamily::Rf),
            _ => Err(Error::Config(format!("unknown model `{s}` (expected lr or rf)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Lr(LrConfig),
    Rf(RfConfig),
}

impl ModelConfig {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelConfig::Lr(_) => ModelFamily::Lr,
            ModelConfig::Rf(_) => ModelFamily::Rf,
        }
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelConfig::Lr(c) => write!(
                f,
                "lr(C={:.4e}, penalty={}, max_iter={})",
                c.c,
                c.penalty.as_str(),
                c.max_iter
            ),
            ModelConfig::Rf(c) => write!(
                f,
                "rf(trees={}, depth={}, min_split={}, min_leaf={})",
                c.n_estimators, c.max_depth, c.min_samples_split, c.min_samples_leaf
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Lr(LrModel),
    Rf(RfModel),
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Lr(_) => ModelFamily::Lr,
            Model::Rf(_) => ModelFamily::Rf,
        }
    }

    /// Positive-class scores in `[0, 1]`, one per row.
    pub fn predict_proba(&self, data: &FlatDataset) -> Result<Vec<f64>> {
        self.predict_rows(data, &data.all_rows())
    }

    pub fn predict_rows(&self, data: &FlatDataset, rows: &[usize]) -> Result<Vec<f64>> {
        match self {
            Model::Lr(m) => m.predict_rows(data, rows),
            Model::Rf(m) => m.predict_rows(data, rows),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Model::Lr(m) => m.to_text(),
            Model::Rf(m) => m.to_text(),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        match text.lines().next() {
            Some(lr::HEADER) => LrModel::from_text(text).map(Model::Lr),
            Some(rf::HEADER) => RfModel::from_text(text).map(Model::Rf),
            _ => Err(Error::Artifact("unrecognized model header".into())),
        }
    }
}

/// Fits `config` on the given rows of `data`.
pub fn train(data: &FlatDataset, rows: &[usize], config: &ModelConfig) -> Result<Model> {
    match config {
        ModelConfig::Lr(c) => train_lr(data, rows, c).map(Model::Lr),
        ModelConfig::Rf(c) => train_rf(data, rows, c).map(Model::Rf),
    }
}

pub(crate) fn check_labels(data: &FlatDataset, rows: &[usize]) -> Result<()> {
    let pos = rows.iter().filter(|&&i| data.labels[i]).count();
    if rows.len() < 2 || pos == 0 || pos == rows.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// `key,value` lines shared by the text artifact formats.
pub(crate) fn kv_line(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k},{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn parse_kv(line: Option<&str>, what: &str) -> Result<HashMap<String, String>> {
    let line = line.ok_or_else(|| Error::Artifact(format!("missing {what} line")))?;
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() % 2 != 0 {
        return Err(Error::Artifact(format!("malformed {what} line `{line}`")));
    }
    Ok(parts
        .chunks(2)
        .map(|kv| (kv[0].to_string(), kv[1].to_string()))
        .collect())
}

pub(crate) fn kv_get<T: FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Artifact(format!("missing or malformed `{key}`")))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn dataset(columns: &[&str], rows: &[(Vec<f32>, bool)]) -> FlatDataset {
        let cols: Arc<[String]> = columns.iter().map(|c| c.to_string()).collect();
        let examples: Vec<FlatExample> = rows
            .iter()
            .enumerate()
            .map(|(i, (x, y))| FlatExample {
                stay_id: i as u32,
                features: x.clone(),
                label: *y,
            })
            .collect();
        FlatDataset::from_examples(cols, &examples).unwrap()
    }

    /// Two Gaussian classes with means ±`mu` along the first axis.
    pub fn gaussian(n: usize, d: usize, mu: f64, seed: u64) -> FlatDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<String> = (0..d).map(|j| format!("x{j:02}")).collect();
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let rows: Vec<(Vec<f32>, bool)> = (0..n)
            .map(|_| {
                let y = rng.random_bool(0.5);
                let x = (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let shift = if j == 0 { if y { mu } else { -mu } } else { 0.0 };
                        (z + shift) as f32
                    })
                    .collect();
                (x, y)
            })
            .collect();
        dataset(&refs, &rows)
    }

    pub fn xor(n_per: usize, seed: u64) -> FlatDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for (cx, cy) in [(-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)] {
            for _ in 0..n_per {
                let x = cx + rng.random_range(-0.3..0.3);
                let y = cy + rng.random_range(-0.3..0.3);
                rows.push((vec![x as f32, y as f32], cx * cy < 0.0));
            }
        }
        dataset(&["a", "b"], &rows)
    }
}
