use std::fmt::Write as _;
use std::sync::Arc;

use super::eigen::symmetric_eigen;
use super::ImputedTensor;
use crate::{Error, Result};

const HEADER: &str = "# yearshift pca v1";

/// Streaming sums for the pooled covariance of hour-rows. Only the upper
/// triangle of the uncentered Gram matrix is accumulated.
#[derive(Clone, Debug)]
pub struct PcaAccumulator {
    dim: usize,
    n: u64,
    sum: Vec<f64>,
    gram: Vec<f64>,
    nz: Vec<(usize, f64)>,
}

impl PcaAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            sum: vec![0.0; dim],
            gram: vec![0.0; dim * dim],
            nz: Vec::with_capacity(dim),
        }
    }

    pub fn n_rows(&self) -> u64 {
        self.n
    }

    pub fn add_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "row width does not match accumulator");
        self.n += 1;
        self.nz.clear();
        for (i, &x) in row.iter().enumerate() {
            if x != 0.0 {
                self.sum[i] += x;
                self.nz.push((i, x));
            }
        }
        for (a, &(i, xi)) in self.nz.iter().enumerate() {
            let base = i * self.dim;
            for &(j, xj) in &self.nz[a..] {
                self.gram[base + j] += xi * xj;
            }
        }
    }

    pub fn add_tensor(&mut self, t: &ImputedTensor) {
        for h in 0..t.hours {
            self.add_row(t.row(h));
        }
    }

    pub fn merge(&mut self, other: &PcaAccumulator) {
        assert_eq!(self.dim, other.dim);
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
    }

    /// Sample covariance `(G - s sᵀ / N) / (N - 1)`, row-major and symmetric.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let n = self.n as f64;
        let denom = (n - 1.0).max(1.0);
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = (self.gram[i * d + j] - self.sum[i] * self.sum[j] / n) / denom;
                c[i * d + j] = v;
                c[j * d + i] = v;
            }
        }
        c
    }

    pub fn finish(&self, columns: Arc<[String]>, k: usize) -> Result<PcaModel> {
        if k > self.dim {
            return Err(Error::Config(format!(
                "pca k = {k} exceeds input dimension {}",
                self.dim
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("pca needs at least one training row".into()));
        }
        assert_eq!(columns.len(), self.dim);
        let n = self.n as f64;
        let means = self.sum.iter().map(|s| s / n).collect();
        let (values, vectors) = symmetric_eigen(&self.covariance(), self.dim);
        let mut components = Vec::with_capacity(k * self.dim);
        for v in vectors.into_iter().take(k) {
            // sign convention: the largest-magnitude entry is positive
            let mut best = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[best].abs() {
                    best = i;
                }
            }
            let sign = if v[best] < 0.0 { -1.0 } else { 1.0 };
            components.extend(v.iter().map(|x| x * sign));
        }
        Ok(PcaModel {
            columns,
            k,
            means,
            components,
            explained_variance: values.into_iter().take(k).map(|v| v.max(0.0)).collect(),
        })
    }
}

/// Fits PCA on every hour-row of every training tensor.
pub fn fit_pca<'a>(
    tensors: impl IntoIterator<Item = &'a ImputedTensor>,
    k: usize,
) -> Result<PcaModel> {
    let tensors: Vec<&ImputedTensor> = tensors.into_iter().collect();
    let Some(first) = tensors.first() else {
        return Err(Error::Config("pca needs at least one training stay".into()));
    };
    let columns = first.columns.clone();
    let dim = columns.len();
    if k > dim {
        return Err(Error::Config(format!("pca k = {k} exceeds input dimension {dim}")));
    }
    // fixed chunking keeps the summation order independent of thread count
    let chunk = tensors.len().div_ceil(16).max(1);
    let partial = |part: &[&ImputedTensor]| {
        let mut acc = PcaAccumulator::new(dim);
        for t in part {
            acc.add_tensor(t);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<PcaAccumulator> = {
        use rayon::prelude::*;
        tensors.par_chunks(chunk).map(partial).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<PcaAccumulator> = tensors.chunks(chunk).map(partial).collect();
    let mut acc = PcaAccumulator::new(dim);
    for p in &parts {
        acc.merge(p);
    }
    acc.finish(columns, k)
}

/// Projection of an imputed stay onto principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedTensor {
    pub stay_id: u32,
    pub hours: usize,
    pub k: usize,
    data: Vec<f64>,
}

impl ProjectedTensor {
    pub fn row(&self, hour: usize) -> &[f64] {
        &self.data[hour * self.k..(hour + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub columns: Arc<[String]>,
    pub k: usize,
    pub means: Vec<f64>,
    /// `k × dim`, row-major.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn column_ids(&self) -> Vec<String> {
        (0..self.k).map(|i| format!("pc{:03}", i + 1)).collect()
    }

    pub fn project_row(&self, row: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(self.k) {
            let comp = &self.components[i * d..(i + 1) * d];
            *o = row
                .iter()
                .zip(&self.means)
                .zip(comp)
                .map(|((x, m), c)| (x - m) * c)
                .sum();
        }
    }

    pub fn project(&self, t: &ImputedTensor) -> Result<ProjectedTensor> {
        if t.width() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: t.width(),
            });
        }
        let mut data = vec![0.0; t.hours * self.k];
        for h in 0..t.hours {
            self.project_row(t.row(h), &mut data[h * self.k..(h + 1) * self.k]);
        }
        Ok(ProjectedTensor {
            stay_id: t.stay_id,
            hours: t.hours,
            k: self.k,
            data,
        })
    }

    /// Header, dimensions, then one line each for columns, means, explained
    /// variances and every component.
    pub fn to_text(&self) -> String {
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "dim,{},k,{}", self.dim(), self.k);
        let _ = writeln!(s, "{}", self.columns.join(","));
        let _ = writeln!(s, "{}", join(&self.means));
        let _ = writeln!(s, "{}", join(&self.explained_variance));
        for i in 0..self.k {
            let _ = writeln!(s, "{}", join(self.component(i)));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Artifact(format!("pca artifact: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("header missing or wrong version"));
        }
        let dims: Vec<&str> = lines.next().ok_or_else(|| bad("no dimensions"))?.split(',').collect();
        let (dim, k) = match dims.as_slice() {
            ["dim", d, "k", k] => (
                d.parse::<usize>().map_err(|_| bad("dim"))?,
                k.parse::<usize>().map_err(|_| bad("k"))?,
            ),
            _ => return Err(bad("dimension line")),
        };
        let floats = |line: Option<&str>, n: usize, what: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad(what))?;
            let xs: Vec<f64> = if line.is_empty() {
                Vec::new()
            } else {
                line.split(',')
                    .map(|x| x.parse().map_err(|_| bad(what)))
                    .collect::<Result<_>>()?
            };
            if xs.len() != n {
                return Err(bad(what));
            }
            Ok(xs)
        };
        let columns: Arc<[String]> = lines
            .next()
            .ok_or_else(|| bad("columns"))?
            .split(',')
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        if columns.len() != dim {
            return Err(bad("columns"));
        }
        let means = floats(lines.next(), dim, "means")?;
        let explained_variance = floats(lines.next(), k, "explained variance")?;
        let mut components = Vec::with_capacity(k * dim);
        for _ in 0..k {
            components.extend(floats(lines.next(), dim, "component")?);
        }
        Ok(Self {
            columns,
            k,
            means,
            components,
            explained_variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::HourlyTensor;
    use crate::represent::simple_impute;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn acc_from(rows: &[Vec<f64>]) -> PcaAccumulator {
        let mut acc = PcaAccumulator::new(rows[0].len());
        for r in rows {
            acc.add_row(r);
        }
        acc
    }

    fn cols(n: usize) -> Arc<[String]> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn dominant_axis_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let t: f64 = rng.random_range(-5.0..5.0);
                let e: f64 = rng.random_range(-1e-3..1e-3);
                vec![t + e, t - e]
            })
            .collect();
        let m = acc_from(&rows).finish(cols(2), 1).unwrap();
        let h = 0.5f64.sqrt();
        assert!((m.component(0)[0] - h).abs() < 1e-3);
        assert!((m.component(0)[1] - h).abs() < 1e-3);
    }

    #[test]
    fn full_rank_projection_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let m = acc_from(&rows).finish(cols(4), 4).unwrap();
        let proj: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut o = vec![0.0; 4];
                m.project_row(r, &mut o);
                o
            })
            .collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for i in 0..rows.len() {
            for j in 0..i {
                assert!((dist(&rows[i], &rows[j]) - dist(&proj[i], &proj[j])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn k_above_dimension_is_a_config_error() {
        let acc = acc_from(&[vec![1.0, 2.0]]);
        assert!(matches!(acc.finish(cols(2), 3), Err(Error::Config(_))));
    }

    #[test]
    fn covariance_matches_two_pass_formula() {
        let rows = vec![vec![1.0, 0.0, 2.0], vec![3.0, 1.0, 0.0], vec![0.0, 0.0, 5.0]];
        let c = acc_from(&rows).covariance();
        for i in 0..3 {
            for j in 0..3 {
                let mi = rows.iter().map(|r| r[i]).sum::<f64>() / 3.0;
                let mj = rows.iter().map(|r| r[j]).sum::<f64>() / 3.0;
                let want = rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / 2.0;
                assert!((c[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_on_imputed_tensors_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tensors: Vec<ImputedTensor> = (0..30)
            .map(|s| {
                let mut t = HourlyTensor::empty(s, 24, cols(3));
                for h in 0..24 {
                    for c in 0..3 {
                        if rng.random_bool(0.4) {
                            t.set(h, c, rng.random_range(-2.0..2.0));
                        }
                    }
                }
                simple_impute(&t)
            })
            .collect();
        let m = fit_pca(&tensors, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = m.component(i).iter().zip(m.component(j)).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        for w in m.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert_eq!(PcaModel::from_text(&m.to_text()).unwrap(), m);
        let p = m.project(&tensors[0]).unwrap();
        assert_eq!(p.row(23).len(), 5);
        assert!(fit_pca(&tensors, 10).is_err());
    }
}
