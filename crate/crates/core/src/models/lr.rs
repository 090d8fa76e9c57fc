use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{check_labels, kv_get, kv_line, parse_kv, FlatDataset};
use crate::{Error, Result};

pub(crate) const HEADER: &str = "# yearshift lr v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

impl Penalty {
    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(Error::Config(format!("unknown penalty `{s}`"))),
        }
    }
}

/// Regularized logistic regression. The objective is the mean logistic loss
/// plus `‖w‖₁ / (C n)` or `‖w‖² / (2 C n)`; the intercept is not penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub c: f64,
    pub penalty: Penalty,
    pub max_iter: usize,
    /// Stop once the proximal gradient norm falls below this.
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            penalty: Penalty::L2,
            max_iter: 1000,
            tol: 1e-7,
        }
    }
}

impl LrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("lr C must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("lr needs max_iter >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrModel {
    pub config: LrConfig,
    pub input_dim: usize,
    /// Informative training columns, sorted by id.
    pub columns: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub n_iter: usize,
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

fn dot(x: &[f32], w: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xs = x.chunks_exact(4);
    let ws = w.chunks_exact(4);
    let (xr, wr) = (xs.remainder(), ws.remainder());
    for (a, b) in xs.zip(ws) {
        for l in 0..4 {
            acc[l] += f64::from(a[l]) * b[l];
        }
    }
    let mut tail = 0.0;
    for (a, b) in xr.iter().zip(wr) {
        tail += f64::from(*a) * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Centered training matrix over the informative columns.
struct Design {
    n: usize,
    k: usize,
    x: Vec<f32>,
    y: Vec<f64>,
}

impl Design {
    fn forward(&self, w: &[f64], b: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = b + dot(&self.x[i * self.k..(i + 1) * self.k], w);
        }
    }

    fn backward(&self, r: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (i, &ri) in r.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let row = &self.x[i * self.k..(i + 1) * self.k];
            for (gj, &xj) in g.iter_mut().zip(row) {
                *gj += ri * f64::from(xj);
            }
        }
    }

    fn loss(&self, m: &[f64]) -> f64 {
        m.iter()
            .zip(&self.y)
            .map(|(&mi, &yi)| softplus(mi) - yi * mi)
            .sum::<f64>()
            / self.n as f64
    }
}

pub fn train_lr(data: &FlatDataset, rows: &[usize], config: &LrConfig) -> Result<LrModel> {
    train_lr_traced(data, rows, config).map(|(m, _)| m)
}

/// As [`train_lr`], also returning the objective after every iteration.
pub fn train_lr_traced(
    data: &FlatDataset,
    rows: &[usize],
    config: &LrConfig,
) -> Result<(LrModel, Vec<f64>)> {
    config.validate()?;
    check_labels(data, rows)?;
    let cols = data.informative_columns(rows);
    let n = rows.len();
    let k = cols.len();

    let mut mu = vec![0.0f64; k];
    for &i in rows {
        let r = data.row(i);
        for (m, &j) in mu.iter_mut().zip(&cols) {
            *m += f64::from(r[j]);
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut x = Vec::with_capacity(n * k);
    for &i in rows {
        let r = data.row(i);
        x.extend(cols.iter().zip(&mu).map(|(&j, m)| (f64::from(r[j]) - m) as f32));
    }
    let design = Design {
        n,
        k,
        x,
        y: rows.iter().map(|&i| f64::from(u8::from(data.labels[i]))).collect(),
    };

    let lambda = 1.0 / (config.c * n as f64);
    let (l1, l2) = match config.penalty {
        Penalty::L1 => (lambda, 0.0),
        Penalty::L2 => (0.0, lambda),
    };
    let smooth = |m: &[f64], w: &[f64]| design.loss(m) + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let nonsmooth = |w: &[f64]| l1 * w.iter().map(|v| v.abs()).sum::<f64>();
    let soft = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);

    let ybar = design.y.iter().sum::<f64>() / n as f64;
    let mut xw = vec![0.0; k];
    let mut xb = (ybar / (1.0 - ybar)).ln();
    let mut mx = vec![xb; n];
    let mut fx = smooth(&mx, &xw);
    let mut trace = vec![fx];

    let (mut yw, mut yb, mut my) = (xw.clone(), xb, mx.clone());
    let mut zw = vec![0.0; k];
    let mut mz = vec![0.0; n];
    let mut gw = vec![0.0; k];
    let mut r = vec![0.0; n];
    let mut t = 1.0f64;
    let mut lip = 1e-6;
    let mut converged = false;
    let mut n_iter = 0;

    for it in 0..config.max_iter {
        n_iter = it + 1;
        for ((ri, &mi), &yi) in r.iter_mut().zip(&my).zip(&design.y) {
            *ri = (sigmoid(mi) - yi) / n as f64;
        }
        design.backward(&r, &mut gw);
        for (g, w) in gw.iter_mut().zip(&yw) {
            *g += l2 * w;
        }
        let gb: f64 = r.iter().sum();
        let fy = smooth(&my, &yw);

        let (zb, fz, step_sq) = loop {
            for ((z, &w), &g) in zw.iter_mut().zip(&yw).zip(&gw) {
                *z = soft(w - g / lip, l1 / lip);
            }
            let zb = yb - gb / lip;
            design.forward(&zw, zb, &mut mz);
            let fz = smooth(&mz, &zw);
            let mut lin = (zb - yb) * gb;
            let mut sq = (zb - yb) * (zb - yb);
            for ((z, w), g) in zw.iter().zip(&yw).zip(&gw) {
                let d = z - w;
                lin += d * g;
                sq += d * d;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-13 * fy.abs() {
                break (zb, fz, sq);
            }
            lip *= 2.0;
        };
        let grad_map = lip * step_sq.sqrt();
        let f_new = fz + nonsmooth(&zw);

        if f_new <= fx {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            // gradient-based restart when momentum points uphill
            let mut uphill = (yb - zb) * (zb - xb);
            for ((y, z), x) in yw.iter().zip(&zw).zip(&xw) {
                uphill += (y - z) * (z - x);
            }
            let coef = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
            t = if uphill > 0.0 { 1.0 } else { t_next };
            for j in 0..k {
                yw[j] = zw[j] + coef * (zw[j] - xw[j]);
            }
            yb = zb + coef * (zb - xb);
            for i in 0..n {
                my[i] = mz[i] + coef * (mz[i] - mx[i]);
            }
            std::mem::swap(&mut xw, &mut zw);
            std::mem::swap(&mut mx, &mut mz);
            xb = zb;
            fx = f_new;
        } else {
            let stalled = t == 1.0;
            yw.copy_from_slice(&xw);
            yb = xb;
            my.copy_from_slice(&mx);
            t = 1.0;
            if stalled {
                trace.push(fx);
                break;
            }
        }
        trace.push(fx);
        if grad_map <= config.tol {
            converged = true;
            break;
        }
    }

    let intercept = xb - xw.iter().zip(&mu).map(|(w, m)| w * m).sum::<f64>();
    let model = LrModel {
        config: config.clone(),
        input_dim: data.dim(),
        columns: cols.iter().map(|&j| data.columns[j].clone()).collect(),
        weights: xw,
        intercept,
        converged,
        n_iter,
    };
    Ok((model, trace))
}

impl LrModel {
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
                let m = self.intercept
                    + pos
                        .iter()
                        .zip(&self.weights)
                        .map(|(&j, w)| w * f64::from(row[j]))
                        .sum::<f64>();
                sigmoid(m)
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
                ("c", format!("{:?}", c.c)),
                ("penalty", c.penalty.as_str().into()),
                ("max_iter", c.max_iter.to_string()),
                ("tol", format!("{:?}", c.tol)),
            ])
        );
        let _ = writeln!(
            s,
            "{}",
            kv_line(&[
                ("input_dim", self.input_dim.to_string()),
                ("intercept", format!("{:?}", self.intercept)),
                ("converged", u8::from(self.converged).to_string()),
                ("n_iter", self.n_iter.to_string()),
            ])
        );
        let _ = writeln!(s, "column,weight");
        for (col, w) in self.columns.iter().zip(&self.weights) {
            let _ = writeln!(s, "{col},{w:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Artifact("lr header missing or wrong version".into()));
        }
        let cfg = parse_kv(lines.next(), "lr config")?;
        let meta = parse_kv(lines.next(), "lr model")?;
        if lines.next() != Some("column,weight") {
            return Err(Error::Artifact("lr weight table header missing".into()));
        }
        let mut columns = Vec::new();
        let mut weights = Vec::new();
        for line in lines {
            let (col, w) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Artifact(format!("bad lr weight row `{line}`")))?;
            columns.push(col.to_string());
            weights.push(
                w.parse()
                    .map_err(|_| Error::Artifact(format!("bad lr weight `{w}`")))?,
            );
        }
        Ok(Self {
            config: LrConfig {
                c: kv_get(&cfg, "c")?,
                penalty: kv_get::<String>(&cfg, "penalty")?.parse()?,
                max_iter: kv_get(&cfg, "max_iter")?,
                tol: kv_get(&cfg, "tol")?,
            },
            input_dim: kv_get(&meta, "input_dim")?,
            columns,
            weights,
            intercept: kv_get(&meta, "intercept")?,
            converged: kv_get::<u8>(&meta, "converged")? == 1,
            n_iter: kv_get(&meta, "n_iter")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::{dataset, gaussian};

    fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (s1, _) in scores.iter().zip(labels).filter(|(_, y)| **y) {
            for (s0, _) in scores.iter().zip(labels).filter(|(_, y)| !**y) {
                den += 1.0;
                num += if s1 > s0 { 1.0 } else if s1 == s0 { 0.5 } else { 0.0 };
            }
        }
        num / den
    }

    fn cfg(c: f64, penalty: Penalty) -> LrConfig {
        LrConfig {
            c,
            penalty,
            ..LrConfig::default()
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let rows: Vec<(Vec<f32>, bool)> = (0..100).map(|i| (vec![if i % 2 == 0 { -1.0 } else { 1.0 }], i % 2 == 1)).collect();
        let d = dataset(&["x"], &rows);
        let m = train_lr(&d, &d.all_rows(), &cfg(1e3, Penalty::L2)).unwrap();
        let p = m.predict_proba(&d).unwrap();
        assert_eq!(pair_auc(&p, &d.labels), 1.0);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn uninformative_features_give_half() {
        let rows: Vec<(Vec<f32>, bool)> = (0..40).map(|i| (vec![3.0, -1.0], i % 2 == 0)).collect();
        let d = dataset(&["a", "b"], &rows);
        let m = train_lr(&d, &d.all_rows(), &LrConfig::default()).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        for p in m.predict_proba(&d).unwrap() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_score_one_half() {
        let m = LrModel {
            config: LrConfig::default(),
            input_dim: 2,
            columns: vec!["a".into(), "b".into()],
            weights: vec![0.0, 0.0],
            intercept: 0.0,
            converged: true,
            n_iter: 0,
        };
        let d = dataset(&["a", "b"], &[(vec![5.0, -2.0], true), (vec![0.1, 9.0], false)]);
        assert_eq!(m.predict_proba(&d).unwrap(), vec![0.5, 0.5]);
        let narrow = dataset(&["a"], &[(vec![1.0], true)]);
        assert!(matches!(
            m.predict_proba(&narrow),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn gaussian_fixture_is_close_to_bayes_rule() {
        let train = gaussian(600, 2, 0.6, 1);
        let test = gaussian(3000, 2, 0.6, 2);
        let m = train_lr(&train, &train.all_rows(), &cfg(1.0, Penalty::L2)).unwrap();
        let got = pair_auc(&m.predict_proba(&test).unwrap(), &test.labels);
        // equal isotropic covariances: the Bayes score is the first coordinate
        let bayes: Vec<f64> = (0..test.n_rows()).map(|i| f64::from(test.get(i, 0))).collect();
        let want = pair_auc(&bayes, &test.labels);
        assert!((got - want).abs() < 0.02, "lr {got} vs bayes {want}");
    }

    #[test]
    fn objective_never_increases() {
        let d = gaussian(300, 6, 0.4, 3);
        for penalty in [Penalty::L1, Penalty::L2] {
            let (_, trace) = train_lr_traced(&d, &d.all_rows(), &cfg(0.5, penalty)).unwrap();
            assert!(trace.len() > 2);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0], "{penalty:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let d = gaussian(300, 5, 0.5, 4);
        let mut prev = f64::INFINITY;
        for c in [10.0, 1.0, 0.1, 0.01, 0.001] {
            let m = train_lr(&d, &d.all_rows(), &cfg(c, Penalty::L2)).unwrap();
            assert!(m.converged);
            let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(norm <= prev + 1e-9, "C={c}: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn l1_zeroes_noise_features() {
        let d = gaussian(400, 8, 0.8, 5);
        let m = train_lr(&d, &d.all_rows(), &cfg(0.01, Penalty::L1)).unwrap();
        let zeros = m.weights.iter().filter(|w| **w == 0.0).count();
        assert!(zeros >= 5, "{:?}", m.weights);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn column_permutation_leaves_scores_unchanged() {
        let d = gaussian(200, 5, 0.5, 6);
        let perm = [3, 0, 4, 1, 2];
        let p = d.permute_columns(&perm);
        for penalty in [Penalty::L1, Penalty::L2] {
            let a = train_lr(&d, &d.all_rows(), &cfg(2.0, penalty)).unwrap();
            let b = train_lr(&p, &p.all_rows(), &cfg(2.0, penalty)).unwrap();
            let (sa, sb) = (a.predict_proba(&d).unwrap(), b.predict_proba(&p).unwrap());
            for (x, y) in sa.iter().zip(&sb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_labels_and_bad_config() {
        let d = dataset(&["a"], &[(vec![1.0], true), (vec![2.0], true)]);
        assert!(matches!(
            train_lr(&d, &[0, 1], &LrConfig::default()),
            Err(Error::DegenerateLabels)
        ));
        let d = gaussian(20, 1, 1.0, 7);
        assert!(train_lr(&d, &d.all_rows(), &cfg(0.0, Penalty::L2)).is_err());
    }

    #[test]
    fn text_round_trip_reproduces_scores() {
        let d = gaussian(100, 3, 0.5, 8);
        let m = train_lr(&d, &d.all_rows(), &cfg(0.3, Penalty::L1)).unwrap();
        let back = LrModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict_proba(&d).unwrap(), m.predict_proba(&d).unwrap());
    }
}
