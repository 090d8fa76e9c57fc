use std::fmt::Write as _;
use std::sync::Arc;

use crate::cohort::HourlyTensor;
use crate::{Error, Result};

const STD_FLOOR: f64 = 1e-12;
const HEADER: &str = "# yearshift normalizer v1";

/// Per-column z-score statistics fit on training tensors only.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub columns: Arc<[String]>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalizer {
    /// Population mean and standard deviation over observed cells. Columns with
    /// no observations get mean 0 / std 1; stds below 1e-12 are replaced by 1.
    ///
    /// Panics if the tensors do not share one column layout.
    pub fn fit<'a>(tensors: impl IntoIterator<Item = &'a HourlyTensor>) -> Self {
        let tensors: Vec<&HourlyTensor> = tensors.into_iter().collect();
        let Some(first) = tensors.first() else {
            return Self {
                columns: Arc::from(Vec::<String>::new()),
                means: Vec::new(),
                stds: Vec::new(),
            };
        };
        let columns = first.columns.clone();
        let d = columns.len();
        let mut n = vec![0u64; d];
        let mut sum = vec![0.0f64; d];
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for t in &tensors {
            assert_eq!(t.columns, columns, "normalizer inputs must share columns");
            for (_, c, v) in t.observed() {
                n[c] += 1;
                sum[c] += v;
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        let mut means: Vec<f64> = (0..d)
            .map(|c| match n[c] {
                0 => 0.0,
                _ if min[c] == max[c] => min[c],
                k => sum[c] / k as f64,
            })
            .collect();
        // second pass: centered sums for variance plus a mean correction
        let mut dev = vec![0.0f64; d];
        let mut sq = vec![0.0f64; d];
        for t in &tensors {
            for (_, c, v) in t.observed() {
                let x = v - means[c];
                dev[c] += x;
                sq[c] += x * x;
            }
        }
        let mut stds = vec![1.0; d];
        for c in 0..d {
            if n[c] == 0 || min[c] == max[c] {
                continue;
            }
            let k = n[c] as f64;
            let shift = dev[c] / k;
            means[c] += shift;
            let var = (sq[c] / k - shift * shift).max(0.0);
            let sd = var.sqrt();
            stds[c] = if sd < STD_FLOOR { 1.0 } else { sd };
        }
        Self {
            columns,
            means,
            stds,
        }
    }

    /// `(v - mean) / std` on observed cells; absent cells stay absent.
    ///
    /// Panics if the tensor's columns differ from the fitted columns.
    pub fn apply(&self, tensor: &HourlyTensor) -> HourlyTensor {
        assert_eq!(tensor.columns, self.columns, "normalizer column mismatch");
        let mut out = tensor.clone();
        let d = self.columns.len();
        for (i, v) in out.raw_values_mut().iter_mut().enumerate() {
            if !v.is_nan() {
                let c = i % d;
                *v = (*v - self.means[c]) / self.stds[c];
            }
        }
        out
    }

    /// Versioned delimited text: header line, then `column,mean,std` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "column,mean,std");
        for ((c, m), sd) in self.columns.iter().zip(&self.means).zip(&self.stds) {
            let _ = writeln!(s, "{c},{m:?},{sd:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) || lines.next() != Some("column,mean,std") {
            return Err(Error::Artifact("normalizer header missing or wrong version".into()));
        }
        let (mut columns, mut means, mut stds) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Artifact(format!("normalizer row {}: `{line}`", i + 3));
            if parts.len() != 3 {
                return Err(bad());
            }
            columns.push(parts[0].to_string());
            means.push(parts[1].parse().map_err(|_| bad())?);
            stds.push(parts[2].parse().map_err(|_| bad())?);
        }
        Ok(Self {
            columns: columns.into(),
            means,
            stds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cols(n: usize) -> Arc<[String]> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn two_point_column() {
        let mut t = HourlyTensor::empty(1, 2, cols(1));
        t.set(0, 0, 1.0);
        t.set(1, 0, 3.0);
        let n = Normalizer::fit([&t]);
        assert_eq!(n.means, vec![2.0]);
        assert_eq!(n.stds, vec![1.0]);
        assert_eq!(n.apply(&t).get(1, 0), Some(1.0));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let mut t = HourlyTensor::empty(1, 5, cols(1));
        for h in 0..5 {
            t.set(h, 0, 0.1);
        }
        let n = Normalizer::fit([&t]);
        assert_eq!(n.stds, vec![1.0]);
        let out = n.apply(&t);
        assert!((0..5).all(|h| out.get(h, 0) == Some(0.0)));
    }

    #[test]
    fn unobserved_column_falls_back() {
        let t = HourlyTensor::empty(1, 3, cols(2));
        let n = Normalizer::fit([&t]);
        assert_eq!(n.means, vec![0.0, 0.0]);
        assert_eq!(n.stds, vec![1.0, 1.0]);
    }

    #[test]
    fn held_out_uses_training_statistics() {
        let mut train = HourlyTensor::empty(1, 4, cols(1));
        for (h, v) in [10.0, 12.0, 14.0, 16.0].iter().enumerate() {
            train.set(h, 0, *v);
        }
        let mut test = HourlyTensor::empty(2, 4, cols(1));
        test.set(2, 0, 20.0);
        let n = Normalizer::fit([&train]);
        // oracle: mean 13, population std sqrt(5)
        let want = (20.0 - 13.0) / 5f64.sqrt();
        let got = n.apply(&test).get(2, 0).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(n.apply(&test).n_observed(), 1);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut t = HourlyTensor::empty(1, 3, cols(2));
        t.set(0, 0, 0.1);
        t.set(1, 0, 0.7);
        t.set(2, 1, -3.3);
        let n = Normalizer::fit([&t]);
        assert_eq!(Normalizer::from_text(&n.to_text()).unwrap(), n);
        assert!(Normalizer::from_text("bogus").is_err());
    }

    proptest! {
        #[test]
        fn training_data_is_standardized(
            vals in prop::collection::vec(prop::option::of(-1e3f64..1e3), 48)
        ) {
            let mut a = HourlyTensor::empty(1, 12, cols(2));
            let mut b = HourlyTensor::empty(2, 12, cols(2));
            for (i, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    let t = if i < 24 { &mut a } else { &mut b };
                    t.set((i % 24) / 2, i % 2, *v);
                }
            }
            let n = Normalizer::fit([&a, &b]);
            let (za, zb) = (n.apply(&a), n.apply(&b));
            for c in 0..2 {
                let xs: Vec<f64> = za.observed().chain(zb.observed()).filter(|x| x.1 == c).map(|x| x.2).collect();
                if xs.len() < 2 || n.stds[c] == 1.0 && xs.iter().all(|x| *x == xs[0]) {
                    continue;
                }
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
                prop_assert!(m.abs() < 1e-9, "mean {m}");
                prop_assert!((sd - 1.0).abs() < 1e-9, "std {sd}");
            }
        }
    }
}
