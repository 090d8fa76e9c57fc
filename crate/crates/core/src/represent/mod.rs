//! Per-hour feature representations and the shared normalize → impute path.
//!
//! Four representations transform the raw item grid of a stay:
//!
//! * raw: one column per item id over the union vocabulary of both eras
//! * aggregate: expert groups of items, converted to canonical units and averaged
//! * concept span: items mapped to ontology concepts through their descriptions
//! * PCA: principal components of the imputed raw triplets
//!
//! Raw, aggregate and concept tensors are built from unnormalized values,
//! normalized per column with statistics fit on training stays only, and then
//! expanded by [`simple_impute`] into value / mask / delta channels.

mod aggregate;
mod concept;
mod eigen;
mod impute;
mod normalize;
mod pca;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cohort::{HourlyTensor, ItemColumns};
use crate::{Error, Result};

pub use aggregate::{build_aggregate, group_column_id};
pub use concept::{build_concept_span, match_concepts, ConceptMapping};
pub use eigen::symmetric_eigen;
pub(crate) use impute::simple_impute_with_columns;
pub use impute::{simple_impute, triplet_columns, ImputedTensor};
pub use normalize::Normalizer;
pub use pca::{fit_pca, PcaAccumulator, PcaModel, ProjectedTensor};

/// One expert-defined group of items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationGroup {
    pub group_id: u32,
    pub group_name: String,
    /// `(item_id, to_canonical_factor)` pairs.
    pub members: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationMap {
    pub groups: Vec<AggregationGroup>,
}

impl AggregationMap {
    /// Items may belong to at most one group and factors must be positive.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut ids = HashSet::new();
        for g in &self.groups {
            if !ids.insert(g.group_id) {
                return Err(Error::Config(format!("duplicate group id {}", g.group_id)));
            }
            for (item, factor) in &g.members {
                if !seen.insert(*item) {
                    return Err(Error::Config(format!(
                        "item {item} belongs to more than one aggregation group"
                    )));
                }
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(Error::Config(format!(
                        "item {item} has non-positive canonical factor {factor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A concept and its lowercase token-sequence synonyms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub concept_id: String,
    pub synonyms: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniOntology {
    pub concepts: Vec<Concept>,
}

impl MiniOntology {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for c in &self.concepts {
            if !ids.insert(&c.concept_id) {
                return Err(Error::Config(format!("duplicate concept id {}", c.concept_id)));
            }
            for syn in &c.synonyms {
                if syn.is_empty() || syn.iter().any(|t| t.is_empty() || t.to_lowercase() != *t) {
                    return Err(Error::Config(format!(
                        "concept {} has an empty or non-lowercase synonym",
                        c.concept_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Re-aligns an item tensor onto the full item vocabulary. Items of the other
/// era simply stay absent, so every stay shares one raw feature space.
pub fn build_raw(tensor: &HourlyTensor, vocabulary: &ItemColumns) -> HourlyTensor {
    if tensor.columns == vocabulary.ids {
        return tensor.clone();
    }
    let mut out = HourlyTensor::empty(tensor.stay_id, tensor.hours, vocabulary.ids.clone());
    let lookup: std::collections::HashMap<&str, usize> = vocabulary
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    for (h, c, v) in tensor.observed() {
        if let Some(&j) = lookup.get(tensor.columns[c].as_str()) {
            out.set(h, j, v);
        }
    }
    out
}

/// Fraction of absent cells over a set of tensors.
pub fn missingness<'a>(tensors: impl IntoIterator<Item = &'a HourlyTensor>) -> f64 {
    let (mut absent, mut total) = (0usize, 0usize);
    for t in tensors {
        let cells = t.hours * t.n_columns();
        total += cells;
        absent += cells - t.n_observed();
    }
    if total == 0 {
        0.0
    } else {
        absent as f64 / total as f64
    }
}
