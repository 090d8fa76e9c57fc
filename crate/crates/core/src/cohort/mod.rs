//! Cohort selection, hourly bucketing and demographic encoding.

mod load;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::{ChartEvent, ItemSpec, StayMeta};
use crate::{Error, Result};

pub use load::{load_agg_map, load_dataset, load_ontology, DatasetPaths};

/// Typed in-memory events, stays and item dictionary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub events: Vec<ChartEvent>,
    pub stays: Vec<StayMeta>,
    pub items: Vec<ItemSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortCriteria {
    pub first_stay_only: bool,
    pub min_stay_hours: f64,
    /// Exclusive lower bound on age.
    pub min_age_years: f64,
    pub censor_hours: usize,
}

impl Default for CohortCriteria {
    fn default() -> Self {
        Self {
            first_stay_only: true,
            min_stay_hours: 36.0,
            min_age_years: 15.0,
            censor_hours: 24,
        }
    }
}

impl CohortCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.censor_hours == 0 {
            return Err(Error::Config("censor_hours must be positive".into()));
        }
        if (self.censor_hours as f64) >= self.min_stay_hours {
            return Err(Error::Config(format!(
                "censor_hours ({}) must be below min_stay_hours ({}) to keep a label gap",
                self.censor_hours, self.min_stay_hours
            )));
        }
        Ok(())
    }
}

/// Keeps each patient's chronologically first stay (earliest year, then lowest
/// stay id) when it satisfies the length and age thresholds. Sorted by stay id.
pub fn select_cohort(stays: &[StayMeta], criteria: &CohortCriteria) -> Vec<StayMeta> {
    let mut first: HashMap<u32, &StayMeta> = HashMap::new();
    if criteria.first_stay_only {
        for s in stays {
            first
                .entry(s.patient_id)
                .and_modify(|cur| {
                    if (s.admit_year, s.stay_id) < (cur.admit_year, cur.stay_id) {
                        *cur = s;
                    }
                })
                .or_insert(s);
        }
    }
    let mut out: Vec<StayMeta> = stays
        .iter()
        .filter(|s| !criteria.first_stay_only || first[&s.patient_id].stay_id == s.stay_id)
        .filter(|s| s.los_days * 24.0 >= criteria.min_stay_hours)
        .filter(|s| s.age > criteria.min_age_years)
        .cloned()
        .collect();
    out.sort_by_key(|s| s.stay_id);
    out.dedup_by_key(|s| s.stay_id);
    out
}

/// Hours × columns grid of optional values. Absent cells are stored as NaN.
#[derive(Clone, Debug)]
pub struct HourlyTensor {
    pub stay_id: u32,
    pub hours: usize,
    pub columns: Arc<[String]>,
    values: Vec<f64>,
}

impl PartialEq for HourlyTensor {
    fn eq(&self, other: &Self) -> bool {
        self.stay_id == other.stay_id
            && self.hours == other.hours
            && self.columns == other.columns
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl HourlyTensor {
    pub fn empty(stay_id: u32, hours: usize, columns: Arc<[String]>) -> Self {
        let n = hours * columns.len();
        Self {
            stay_id,
            hours,
            columns,
            values: vec![f64::NAN; n],
        }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, hour: usize, col: usize) -> Option<f64> {
        let v = self.values[hour * self.columns.len() + col];
        (!v.is_nan()).then_some(v)
    }

    /// Panics on non-finite input; absent cells are written with [`clear`](Self::clear).
    pub fn set(&mut self, hour: usize, col: usize, value: f64) {
        assert!(value.is_finite(), "tensor values must be finite");
        let d = self.columns.len();
        self.values[hour * d + col] = value;
    }

    pub fn clear(&mut self, hour: usize, col: usize) {
        let d = self.columns.len();
        self.values[hour * d + col] = f64::NAN;
    }

    pub fn n_observed(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d = self.columns.len();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(move |(i, v)| (i / d, i % d, *v))
    }

    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn raw_values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Column identifier of a raw item. Zero padding makes lexicographic order numeric.
pub fn item_column_id(item_id: u32) -> String {
    format!("item{item_id:07}")
}

/// Raw item columns in fixed lexicographic order with an item → column lookup.
#[derive(Clone, Debug)]
pub struct ItemColumns {
    pub ids: Arc<[String]>,
    pub item_ids: Vec<u32>,
    index: HashMap<u32, usize>,
}

impl ItemColumns {
    pub fn new(item_ids: impl IntoIterator<Item = u32>) -> Self {
        let mut sorted: Vec<(String, u32)> = item_ids
            .into_iter()
            .map(|i| (item_column_id(i), i))
            .collect();
        sorted.sort();
        sorted.dedup();
        let index = sorted.iter().enumerate().map(|(c, (_, i))| (*i, c)).collect();
        Self {
            ids: sorted.iter().map(|(s, _)| s.clone()).collect(),
            item_ids: sorted.into_iter().map(|(_, i)| i).collect(),
            index,
        }
    }

    pub fn from_items(items: &[ItemSpec]) -> Self {
        Self::new(items.iter().map(|i| i.item_id))
    }

    pub fn position(&self, item_id: u32) -> Option<usize> {
        self.index.get(&item_id).copied()
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }
}

/// Events grouped by stay, preserving file order within a stay.
pub fn events_by_stay(events: &[ChartEvent]) -> BTreeMap<u32, Vec<ChartEvent>> {
    let mut out: BTreeMap<u32, Vec<ChartEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.stay_id).or_default().push(*e);
    }
    out
}

/// Averages each item's measurements within half-open hour buckets
/// `[h, h + 1)` over the censoring window. Events of other stays, events at or
/// beyond `censor_hours`, and items outside `columns` are ignored.
pub fn bucket_hourly(
    events: &[ChartEvent],
    stay: &StayMeta,
    criteria: &CohortCriteria,
    columns: &ItemColumns,
) -> HourlyTensor {
    let hours = criteria.censor_hours;
    let d = columns.len();
    let mut sums = vec![0.0f64; hours * d];
    let mut counts = vec![0u32; hours * d];
    for e in events.iter().filter(|e| e.stay_id == stay.stay_id) {
        if !(e.hour_offset >= 0.0 && e.hour_offset < hours as f64) {
            continue;
        }
        let Some(col) = columns.position(e.item_id) else {
            continue;
        };
        let h = (e.hour_offset.floor() as usize).min(hours - 1);
        sums[h * d + col] += e.value;
        counts[h * d + col] += 1;
    }
    let mut tensor = HourlyTensor::empty(stay.stay_id, hours, columns.ids.clone());
    for (i, (s, c)) in sums.iter().zip(&counts).enumerate() {
        if *c > 0 {
            tensor.values[i] = s / f64::from(*c);
        }
    }
    tensor
}

/// One-hot encoder for gender and ethnicity (insurance optional), with the
/// category lists fixed from the whole dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemographicEncoder {
    pub genders: Vec<String>,
    pub ethnicities: Vec<String>,
    pub insurances: Option<Vec<String>>,
}

impl DemographicEncoder {
    pub fn fit(stays: &[StayMeta], include_insurance: bool) -> Self {
        fn cats<'a>(it: impl Iterator<Item = &'a String>) -> Vec<String> {
            let mut v: Vec<String> = it.cloned().collect();
            v.sort();
            v.dedup();
            v
        }
        Self {
            genders: cats(stays.iter().map(|s| &s.gender)),
            ethnicities: cats(stays.iter().map(|s| &s.ethnicity)),
            insurances: include_insurance.then(|| cats(stays.iter().map(|s| &s.insurance))),
        }
    }

    pub fn dim(&self) -> usize {
        self.genders.len() + self.ethnicities.len() + self.insurances.as_ref().map_or(0, Vec::len)
    }

    pub fn column_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.genders.iter().map(|g| format!("demo:gender={g}")).collect();
        ids.extend(self.ethnicities.iter().map(|e| format!("demo:ethnicity={e}")));
        if let Some(ins) = &self.insurances {
            ids.extend(ins.iter().map(|i| format!("demo:insurance={i}")));
        }
        ids
    }

    pub fn encode(&self, stay: &StayMeta) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        let mut offset = 0;
        let mut blocks: Vec<(&[String], &str, &str)> = vec![
            (&self.genders, &stay.gender, "gender"),
            (&self.ethnicities, &stay.ethnicity, "ethnicity"),
        ];
        if let Some(ins) = &self.insurances {
            blocks.push((ins, &stay.insurance, "insurance"));
        }
        for (cats, value, name) in blocks {
            let pos = cats.iter().position(|c| c == value).ok_or_else(|| {
                Error::Config(format!(
                    "stay {}: {name} `{value}` not in encoder categories",
                    stay.stay_id
                ))
            })?;
            out[offset + pos] = 1.0;
            offset += cats.len();
        }
        Ok(out)
    }
}
