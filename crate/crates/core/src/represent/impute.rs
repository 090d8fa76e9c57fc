use std::sync::Arc;

use crate::cohort::HourlyTensor;

/// Dense `hours × 3d` grid. Row layout per feature is `(value, mask, delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputedTensor {
    pub stay_id: u32,
    pub hours: usize,
    /// `{feature}:value`, `{feature}:mask`, `{feature}:delta` for each feature.
    pub columns: Arc<[String]>,
    data: Vec<f64>,
}

impl ImputedTensor {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() / 3
    }

    pub fn row(&self, hour: usize) -> &[f64] {
        let w = self.width();
        &self.data[hour * w..(hour + 1) * w]
    }

    pub fn value(&self, hour: usize, feature: usize) -> f64 {
        self.row(hour)[3 * feature]
    }

    pub fn mask(&self, hour: usize, feature: usize) -> f64 {
        self.row(hour)[3 * feature + 1]
    }

    pub fn delta(&self, hour: usize, feature: usize) -> f64 {
        self.row(hour)[3 * feature + 2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn triplet_columns(features: &[String]) -> Arc<[String]> {
    features
        .iter()
        .flat_map(|f| [format!("{f}:value"), format!("{f}:mask"), format!("{f}:delta")])
        .collect()
}

/// Forward fill with observation mask and scaled time since last observation.
/// Values before the first observation are 0, the training mean after
/// normalization. Delta grows by `1 / tensor.hours` per unobserved hour.
pub fn simple_impute(tensor: &HourlyTensor) -> ImputedTensor {
    simple_impute_with_columns(tensor, triplet_columns(&tensor.columns))
}

/// As [`simple_impute`], reusing a shared column-id list.
pub(crate) fn simple_impute_with_columns(
    tensor: &HourlyTensor,
    columns: Arc<[String]>,
) -> ImputedTensor {
    let d = tensor.n_columns();
    debug_assert_eq!(columns.len(), 3 * d);
    let step = 1.0 / tensor.hours.max(1) as f64;
    let mut data = vec![0.0; tensor.hours * 3 * d];
    let mut last = vec![0.0f64; d];
    let mut delta = vec![0.0f64; d];
    let raw = tensor.raw_values();
    for h in 0..tensor.hours {
        let src = &raw[h * d..(h + 1) * d];
        let dst = &mut data[h * 3 * d..(h + 1) * 3 * d];
        for f in 0..d {
            let v = src[f];
            if v.is_nan() {
                delta[f] += step;
                dst[3 * f] = last[f];
                dst[3 * f + 2] = delta[f];
            } else {
                last[f] = v;
                delta[f] = 0.0;
                dst[3 * f] = v;
                dst[3 * f + 1] = 1.0;
            }
        }
    }
    ImputedTensor {
        stay_id: tensor.stay_id,
        hours: tensor.hours,
        columns,
        data,
    }
}
