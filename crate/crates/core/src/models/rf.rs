use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, kv_get, kv_line, parse_kv, FlatDataset};
use crate::rng::substream;
use crate::{Error, Result};

pub(crate) const HEADER: &str = "# yearshift rf v1";
const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of informative columns tried per split; `None` means √d.
    pub max_features: Option<f64>,
    /// Histogram resolution per column, at most 256.
    pub max_bins: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 10,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            max_bins: 128,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.max_depth == 0 {
            return Err(Error::Config("rf needs n_estimators >= 1 and max_depth >= 1".into()));
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(Error::Config(
                "rf needs min_samples_leaf >= 1 and min_samples_split >= 2".into(),
            ));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(Error::Config(format!("rf max_bins {} outside 2..=256", self.max_bins)));
        }
        if let Some(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("rf max_features {f} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn n_candidates(&self, d: usize) -> usize {
        let m = match self.max_features {
            None => (d as f64).sqrt().floor() as usize,
            Some(f) => (f * d as f64).round() as usize,
        };
        m.clamp(1, d.max(1))
    }
}

/// Training rows quantized per informative column. Columns are in id order and
/// a value `x` falls in bin `b` when `thresholds[b - 1] < x <= thresholds[b]`.
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    input_dim: usize,
    columns: Vec<String>,
    thresholds: Vec<Vec<f32>>,
    /// column-major, `columns.len() × n_rows`
    bins: Vec<u8>,
    labels: Vec<bool>,
    n_rows: usize,
}

impl BinnedMatrix {
    pub fn new(data: &FlatDataset, rows: &[usize], max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let cols = data.informative_columns(rows);
        let n = rows.len();
        let mut thresholds = Vec::with_capacity(cols.len());
        let mut bins = Vec::with_capacity(cols.len() * n);
        let mut vals: Vec<f32> = Vec::with_capacity(n);
        for &j in &cols {
            vals.clear();
            vals.extend(rows.iter().map(|&i| data.get(i, j)));
            let mut sorted = vals.clone();
            sorted.sort_by(f32::total_cmp);
            let th = cut_points(&sorted, max_bins);
            bins.extend(vals.iter().map(|&x| th.partition_point(|&t| t < x) as u8));
            thresholds.push(th);
        }
        Self {
            input_dim: data.dim(),
            columns: cols.iter().map(|&j| data.columns[j].clone()).collect(),
            thresholds,
            bins,
            labels: rows.iter().map(|&i| data.labels[i]).collect(),
            n_rows: n,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    fn column(&self, f: usize) -> &[u8] {
        &self.bins[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

/// Midpoints between adjacent distinct values, thinned to quantiles when
/// there are more distinct values than bins.
fn cut_points(sorted: &[f32], max_bins: usize) -> Vec<f32> {
    let mut uniq: Vec<f32> = sorted.to_vec();
    uniq.dedup();
    let mid = |a: f32, b: f32| {
        let t = (f64::from(a) + (f64::from(b) - f64::from(a)) / 2.0) as f32;
        if t >= b { a } else { t }
    };
    if uniq.len() <= max_bins {
        return uniq.windows(2).map(|w| mid(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut out: Vec<f32> = Vec::with_capacity(max_bins - 1);
    for q in 1..max_bins {
        let v = sorted[q * n / max_bins];
        let k = uniq.partition_point(|&u| u < v);
        if k + 1 < uniq.len() {
            let t = mid(uniq[k], uniq[k + 1]);
            if out.last().is_none_or(|&l| l < t) {
                out.push(t);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// Index into the model's column list, or `u32::MAX` for a leaf.
    pub feature: u32,
    pub threshold: f32,
    pub left: u32,
    pub right: u32,
    /// Fraction of positive training examples reaching this node.
    pub value: f64,
    /// Training examples (with bootstrap multiplicity) reaching this node.
    pub n_samples: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `x`, where `x[f]` is the value of model column `f`.
    pub fn score(&self, x: impl Fn(usize) -> f32) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.value;
            }
            i = if x(n.feature as usize) <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RfModel {
    pub config: RfConfig,
    pub input_dim: usize,
    pub columns: Vec<String>,
    pub trees: Vec<Tree>,
}

pub fn train_rf(data: &FlatDataset, rows: &[usize], config: &RfConfig) -> Result<RfModel> {
    config.validate()?;
    check_labels(data, rows)?;
    let binned = BinnedMatrix::new(data, rows, config.max_bins);
    let local: Vec<usize> = (0..rows.len()).collect();
    train_rf_binned(&binned, &local, config)
}

/// Fits on a subset of an existing binning; `rows` index the binned rows.
pub fn train_rf_binned(binned: &BinnedMatrix, rows: &[usize], config: &RfConfig) -> Result<RfModel> {
    config.validate()?;
    let pos = rows.iter().filter(|&&r| binned.labels[r]).count();
    if rows.len() < 2 || pos == 0 || pos == rows.len() {
        return Err(Error::DegenerateLabels);
    }
    let grow = |t: usize| grow_tree(binned, rows, config, t);
    #[cfg(feature = "parallel")]
    let trees: Vec<Tree> = {
        use rayon::prelude::*;
        (0..config.n_estimators).into_par_iter().map(grow).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees: Vec<Tree> = (0..config.n_estimators).map(grow).collect();
    Ok(RfModel {
        config: config.clone(),
        input_dim: binned.input_dim,
        columns: binned.columns.clone(),
        trees,
    })
}

struct Split {
    feature: usize,
    bin: u8,
    gain: f64,
}

/// Weighted Gini impurity times weight: `2 p (w - p) / w`.
fn gini_mass(w: u64, p: u64) -> f64 {
    if w == 0 {
        0.0
    } else {
        2.0 * p as f64 * (w - p) as f64 / w as f64
    }
}

fn grow_tree(b: &BinnedMatrix, rows: &[usize], cfg: &RfConfig, index: usize) -> Tree {
    let mut rng = substream(cfg.seed, &[index as u64]);
    let mut counts = vec![0u32; b.n_rows];
    if cfg.bootstrap {
        for _ in 0..rows.len() {
            counts[rows[rng.random_range(0..rows.len())]] += 1;
        }
    } else {
        for &r in rows {
            counts[r] += 1;
        }
    }
    let mut idx: Vec<u32> = (0..b.n_rows as u32).filter(|&r| counts[r as usize] > 0).collect();
    let d = b.n_columns();
    let mtry = cfg.n_candidates(d);

    let mut nodes: Vec<Node> = Vec::new();
    let mut hist_w = vec![0u64; 256];
    let mut hist_p = vec![0u64; 256];
    let mut small: Vec<(u8, u64, u64)> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();
    // (node slot, start, end, depth)
    let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
    nodes.push(placeholder());
    while let Some((slot, start, end, depth)) = stack.pop() {
        let members = &idx[start..end];
        let (mut w, mut p) = (0u64, 0u64);
        for &r in members {
            let c = u64::from(counts[r as usize]);
            w += c;
            if b.labels[r as usize] {
                p += c;
            }
        }
        nodes[slot] = Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: p as f64 / w as f64,
            n_samples: w as u32,
        };
        if depth >= cfg.max_depth
            || w < cfg.min_samples_split as u64
            || w < 2 * cfg.min_samples_leaf as u64
            || p == 0
            || p == w
            || d == 0
        {
            continue;
        }

        let parent = gini_mass(w, p);
        let min_leaf = cfg.min_samples_leaf as u64;
        let mut best: Option<Split> = None;
        for f in sample_features(&mut rng, d, mtry) {
            let col = b.column(f);
            let n_bins = b.thresholds[f].len() + 1;
            let consider = |bin: u8, wl: u64, pl: u64, best: &mut Option<Split>| {
                let wr = w - wl;
                if wl < min_leaf || wr < min_leaf {
                    return;
                }
                let gain = parent - gini_mass(wl, pl) - gini_mass(wr, p - pl);
                if gain > 1e-12 * w as f64 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    *best = Some(Split { feature: f, bin, gain });
                }
            };
            if members.len() * 4 < n_bins {
                small.clear();
                small.extend(members.iter().map(|&r| {
                    let c = u64::from(counts[r as usize]);
                    (col[r as usize], c, if b.labels[r as usize] { c } else { 0 })
                }));
                small.sort_unstable_by_key(|e| e.0);
                let (mut wl, mut pl) = (0u64, 0u64);
                for k in 0..small.len() {
                    wl += small[k].1;
                    pl += small[k].2;
                    if k + 1 < small.len() && small[k + 1].0 != small[k].0 {
                        consider(small[k].0, wl, pl, &mut best);
                    }
                }
            } else {
                hist_w[..n_bins].iter_mut().for_each(|v| *v = 0);
                hist_p[..n_bins].iter_mut().for_each(|v| *v = 0);
                for &r in members {
                    let c = u64::from(counts[r as usize]);
                    let bin = col[r as usize] as usize;
                    hist_w[bin] += c;
                    if b.labels[r as usize] {
                        hist_p[bin] += c;
                    }
                }
                let (mut wl, mut pl) = (0u64, 0u64);
                for bin in 0..n_bins - 1 {
                    if hist_w[bin] == 0 {
                        continue;
                    }
                    wl += hist_w[bin];
                    pl += hist_p[bin];
                    if wl == w {
                        break;
                    }
                    consider(bin as u8, wl, pl, &mut best);
                }
            }
        }
        let Some(split) = best else {
            continue;
        };

        let col = b.column(split.feature);
        scratch.clear();
        scratch.extend(members.iter().filter(|&&r| col[r as usize] > split.bin));
        let mut write = start;
        for k in start..end {
            let r = idx[k];
            if col[r as usize] <= split.bin {
                idx[write] = r;
                write += 1;
            }
        }
        idx[write..end].copy_from_slice(&scratch);

        let left = nodes.len();
        nodes.push(placeholder());
        nodes.push(placeholder());
        let node = &mut nodes[slot];
        node.feature = split.feature as u32;
        node.threshold = b.thresholds[split.feature][split.bin as usize];
        node.left = left as u32;
        node.right = left as u32 + 1;
        stack.push((left + 1, write, end, depth + 1));
        stack.push((left, start, write, depth + 1));
    }
    Tree { nodes }
}

fn placeholder() -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value: 0.0,
        n_samples: 0,
    }
}

/// `m` distinct column positions by Floyd's algorithm, in increasing order.
fn sample_features(rng: &mut impl Rng, d: usize, m: usize) -> BTreeSet<usize> {
    let mut chosen = BTreeSet::new();
    for j in d - m..d {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen
}

impl RfModel {
    pub fn predict_proba(&self, data: &FlatDataset) -> Result<Vec<f64>> {
        self.predict_rows(data, &data.all_rows())
    }

    pub fn predict_rows(&self, data: &FlatDataset, rows: &[usize]) -> Result<Vec<f64>> {
        data.check_dim(self.input_dim)?;
        let pos = data.positions(&self.columns)?;
        Ok(rows
            .iter()
            .map(|&i| {
                let row = data.row(i);
                self.trees.iter().map(|t| t.score(|f| row[pos[f]])).sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect())
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(
            s,
            "{}",
            kv_line(&[
                ("n_estimators", c.n_estimators.to_string()),
                ("max_depth", c.max_depth.to_string()),
                ("min_samples_split", c.min_samples_split.to_string()),
                ("min_samples_leaf", c.min_samples_leaf.to_string()),
                (
                    "max_features",
                    c.max_features.map_or("sqrt".into(), |f| format!("{f:?}")),
                ),
                ("max_bins", c.max_bins.to_string()),
                ("bootstrap", u8::from(c.bootstrap).to_string()),
                ("seed", c.seed.to_string()),
            ])
        );
        let _ = writeln!(
            s,
            "{}",
            kv_line(&[
                ("input_dim", self.input_dim.to_string()),
                ("n_columns", self.columns.len().to_string()),
                ("n_trees", self.trees.len().to_string()),
            ])
        );
        for col in &self.columns {
            let _ = writeln!(s, "{col}");
        }
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree,{t},{}", tree.nodes.len());
            for n in &tree.nodes {
                let feature = if n.is_leaf() { -1 } else { i64::from(n.feature) };
                let _ = writeln!(
                    s,
                    "{feature},{:?},{},{},{:?},{}",
                    n.threshold, n.left, n.right, n.value, n.n_samples
                );
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: String| Error::Artifact(format!("rf artifact: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("header missing or wrong version".into()));
        }
        let cfg = parse_kv(lines.next(), "rf config")?;
        let meta = parse_kv(lines.next(), "rf model")?;
        let max_features = match cfg.get("max_features").map(String::as_str) {
            Some("sqrt") => None,
            Some(v) => Some(v.parse().map_err(|_| bad(format!("max_features `{v}`")))?),
            None => return Err(bad("max_features missing".into())),
        };
        let config = RfConfig {
            n_estimators: kv_get(&cfg, "n_estimators")?,
            max_depth: kv_get(&cfg, "max_depth")?,
            min_samples_split: kv_get(&cfg, "min_samples_split")?,
            min_samples_leaf: kv_get(&cfg, "min_samples_leaf")?,
            max_features,
            max_bins: kv_get(&cfg, "max_bins")?,
            bootstrap: kv_get::<u8>(&cfg, "bootstrap")? == 1,
            seed: kv_get(&cfg, "seed")?,
        };
        let n_columns: usize = kv_get(&meta, "n_columns")?;
        let n_trees: usize = kv_get(&meta, "n_trees")?;
        let mut columns = Vec::with_capacity(n_columns);
        for _ in 0..n_columns {
            columns.push(lines.next().ok_or_else(|| bad("truncated column list".into()))?.to_string());
        }
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let head = lines.next().ok_or_else(|| bad(format!("tree {t} missing")))?;
            let parts: Vec<&str> = head.split(',').collect();
            if parts.len() != 3 || parts[0] != "tree" || parts[1] != t.to_string() {
                return Err(bad(format!("bad tree header `{head}`")));
            }
            let n_nodes: usize = parts[2].parse().map_err(|_| bad(format!("bad tree header `{head}`")))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let line = lines.next().ok_or_else(|| bad(format!("tree {t} truncated")))?;
                let f: Vec<&str> = line.split(',').collect();
                let parse_err = || bad(format!("bad node `{line}`"));
                if f.len() != 6 {
                    return Err(parse_err());
                }
                let feature: i64 = f[0].parse().map_err(|_| parse_err())?;
                let node = Node {
                    feature: if feature < 0 { LEAF } else { feature as u32 },
                    threshold: f[1].parse().map_err(|_| parse_err())?,
                    left: f[2].parse().map_err(|_| parse_err())?,
                    right: f[3].parse().map_err(|_| parse_err())?,
                    value: f[4].parse().map_err(|_| parse_err())?,
                    n_samples: f[5].parse().map_err(|_| parse_err())?,
                };
                let in_range = |i: u32| (i as usize) < n_nodes;
                if !node.is_leaf()
                    && ((node.feature as usize) >= n_columns || !in_range(node.left) || !in_range(node.right))
                {
                    return Err(parse_err());
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(Self {
            config,
            input_dim: kv_get(&meta, "input_dim")?,
            columns,
            trees,
        })
    }
}
