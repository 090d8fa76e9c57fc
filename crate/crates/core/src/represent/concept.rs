use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::{tokenize, MiniOntology, Normalizer};
use crate::cohort::{item_column_id, HourlyTensor};
use crate::datagen::ItemSpec;

/// Concepts whose synonyms occur in `description`, keeping only the most
/// specific ones: a match whose token span lies strictly inside another
/// match's span is discarded.
pub fn match_concepts(description: &str, ontology: &MiniOntology) -> BTreeSet<String> {
    let tokens = tokenize(description);
    let mut by_first: HashMap<&str, Vec<(&[String], &str)>> = HashMap::new();
    for c in &ontology.concepts {
        for syn in &c.synonyms {
            if let Some(first) = syn.first() {
                by_first
                    .entry(first.as_str())
                    .or_default()
                    .push((syn.as_slice(), c.concept_id.as_str()));
            }
        }
    }

    // (start, end) -> concepts matching exactly that span
    let mut spans: BTreeMap<(usize, usize), Vec<&str>> = BTreeMap::new();
    for start in 0..tokens.len() {
        let Some(cands) = by_first.get(tokens[start].as_str()) else {
            continue;
        };
        for (syn, concept) in cands {
            let end = start + syn.len();
            if end <= tokens.len() && tokens[start..end] == **syn {
                spans.entry((start, end)).or_default().push(concept);
            }
        }
    }

    // Sorted by start ascending then end descending, a span is strictly
    // contained in another iff some earlier distinct span reaches its end.
    let mut ordered: Vec<(&(usize, usize), &Vec<&str>)> = spans.iter().collect();
    ordered.sort_by(|((s1, e1), _), ((s2, e2), _)| s1.cmp(s2).then(e2.cmp(e1)));
    let mut reach: Option<usize> = None;
    let mut out = BTreeSet::new();
    for ((_, end), concepts) in ordered {
        if reach.is_some_and(|r| r >= *end) {
            continue;
        }
        out.extend(concepts.iter().map(|c| c.to_string()));
        reach = Some(reach.map_or(*end, |r| r.max(*end)));
    }
    out
}

/// Item → concept assignment derived from item descriptions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptMapping {
    /// Sorted concept ids that at least one item maps to.
    pub concepts: Arc<[String]>,
    /// item id → concept column positions.
    pub item_concepts: BTreeMap<u32, Vec<usize>>,
}

impl ConceptMapping {
    pub fn new(items: &[ItemSpec], ontology: &MiniOntology) -> Self {
        let per_item: Vec<(u32, BTreeSet<String>)> = items
            .iter()
            .map(|i| (i.item_id, match_concepts(&i.description, ontology)))
            .collect();
        let all: BTreeSet<&String> = per_item.iter().flat_map(|(_, c)| c.iter()).collect();
        let concepts: Arc<[String]> = all.iter().map(|c| (*c).clone()).collect();
        let pos: HashMap<&str, usize> = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let item_concepts = per_item
            .iter()
            .filter(|(_, c)| !c.is_empty())
            .map(|(item, c)| (*item, c.iter().map(|id| pos[id.as_str()]).collect()))
            .collect();
        Self {
            concepts,
            item_concepts,
        }
    }

    pub fn n_unmapped(&self, items: &[ItemSpec]) -> usize {
        items
            .iter()
            .filter(|i| !self.item_concepts.contains_key(&i.item_id))
            .count()
    }
}

/// One column per concept: the mean of z-scored values of the items mapped to
/// it and observed that hour. `item_stats` holds per-item statistics fit on
/// training stays over the raw item columns.
pub fn build_concept_span(
    tensor: &HourlyTensor,
    mapping: &ConceptMapping,
    item_stats: &Normalizer,
) -> HourlyTensor {
    let z = item_stats.apply(tensor);
    let k = mapping.concepts.len();
    let contributors: Vec<Vec<usize>> = {
        let col_of: HashMap<&str, usize> = z
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut v = vec![Vec::new(); k];
        for (item, concepts) in &mapping.item_concepts {
            if let Some(&col) = col_of.get(item_column_id(*item).as_str()) {
                for &c in concepts {
                    v[c].push(col);
                }
            }
        }
        v
    };
    let mut out = HourlyTensor::empty(tensor.stay_id, tensor.hours, mapping.concepts.clone());
    for h in 0..tensor.hours {
        for (c, cols) in contributors.iter().enumerate() {
            let (mut sum, mut n) = (0.0, 0u32);
            for &col in cols {
                if let Some(v) = z.get(h, col) {
                    sum += v;
                    n += 1;
                }
            }
            if n > 0 {
                out.set(h, c, sum / f64::from(n));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::ItemColumns;
    use crate::datagen::Era;
    use crate::represent::Concept;
    use proptest::prelude::*;

    fn onto(pairs: &[(&str, &str)]) -> MiniOntology {
        let mut concepts: Vec<Concept> = Vec::new();
        for (id, syn) in pairs {
            let toks = tokenize(syn);
            match concepts.iter_mut().find(|c| c.concept_id == *id) {
                Some(c) => c.synonyms.push(toks),
                None => concepts.push(Concept {
                    concept_id: id.to_string(),
                    synonyms: vec![toks],
                }),
            }
        }
        MiniOntology { concepts }
    }

    fn item(id: u32, description: &str) -> ItemSpec {
        ItemSpec {
            item_id: id,
            description: description.into(),
            recorded_unit: "u".into(),
            to_canonical_factor: 1.0,
            era: Era::Both,
            group_id: None,
        }
    }

    #[test]
    fn nested_span_is_pruned() {
        let o = onto(&[("C1", "blood pressure"), ("C2", "arterial blood pressure")]);
        let got = match_concepts("arterial blood pressure mean", &o);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["C2"]);
    }

    #[test]
    fn no_tokens_no_concepts() {
        let o = onto(&[("C1", "blood pressure")]);
        assert!(match_concepts("urine output", &o).is_empty());
        assert!(match_concepts("", &o).is_empty());
    }

    #[test]
    fn overlapping_but_not_nested_spans_both_survive() {
        let o = onto(&[("C1", "blood pressure"), ("C2", "pressure mean")]);
        let got: Vec<String> = match_concepts("blood pressure mean", &o).into_iter().collect();
        assert_eq!(got, vec!["C1", "C2"]);
    }

    #[test]
    fn identical_spans_from_two_concepts_both_survive() {
        let o = onto(&[("C1", "hr"), ("C2", "hr")]);
        assert_eq!(match_concepts("HR", &o).len(), 2);
    }

    #[test]
    fn fan_out_fills_every_concept() {
        let o = onto(&[("C1", "glucose"), ("C2", "serum")]);
        let items = vec![item(1, "Glucose (Serum)")];
        let mapping = ConceptMapping::new(&items, &o);
        assert_eq!(mapping.item_concepts[&1].len(), 2);
        let cols = ItemColumns::new([1]);
        let mut t = HourlyTensor::empty(1, 24, cols.ids.clone());
        t.set(2, 0, 5.0);
        let stats = Normalizer::fit([&t]);
        let out = build_concept_span(&t, &mapping, &stats);
        assert_eq!(out.get(2, 0), out.get(2, 1));
        assert!(out.get(2, 0).is_some());
    }

    #[test]
    fn shared_concept_averages_z_scores() {
        let o = onto(&[("C1", "heart rate")]);
        let items = vec![item(1, "Heart Rate"), item(2, "HEART RATE (bpm)")];
        let mapping = ConceptMapping::new(&items, &o);
        let cols = ItemColumns::new([1, 2]);
        let mut train = HourlyTensor::empty(1, 24, cols.ids.clone());
        // item 1: values {60, 100} → mean 80, std 20; item 2: {1, 3} → mean 2, std 1
        train.set(0, 0, 60.0);
        train.set(1, 0, 100.0);
        train.set(0, 1, 1.0);
        train.set(1, 1, 3.0);
        let stats = Normalizer::fit([&train]);
        let mut t = HourlyTensor::empty(2, 24, cols.ids.clone());
        t.set(4, 0, 100.0); // z = 1
        t.set(4, 1, 4.0); // z = 2
        let out = build_concept_span(&t, &mapping, &stats);
        assert_eq!(out.get(4, 0), Some(1.5));
    }

    /// Exhaustive oracle: every (start, end) span of the description against
    /// every synonym, then pairwise strict-containment filtering.
    pub(crate) fn oracle(description: &str, o: &MiniOntology) -> BTreeSet<String> {
        let toks = tokenize(description);
        let mut matches = Vec::new();
        for s in 0..toks.len() {
            for e in s + 1..=toks.len() {
                for c in &o.concepts {
                    if c.synonyms.iter().any(|syn| syn.as_slice() == &toks[s..e]) {
                        matches.push((s, e, c.concept_id.clone()));
                    }
                }
            }
        }
        matches
            .iter()
            .filter(|(s, e, _)| {
                !matches
                    .iter()
                    .any(|(s2, e2, _)| s2 <= s && e <= e2 && (s2, e2) != (s, e))
            })
            .map(|(_, _, c)| c.clone())
            .collect()
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            desc in prop::collection::vec(0usize..6, 0..10),
            syns in prop::collection::vec((0usize..8, prop::collection::vec(0usize..6, 1..4)), 1..12),
        ) {
            let words = ["blood", "pressure", "mean", "arterial", "rate", "heart"];
            let description = desc.iter().map(|&w| words[w]).collect::<Vec<_>>().join(" ");
            let pairs: Vec<(String, String)> = syns
                .iter()
                .map(|(c, s)| (format!("C{c}"), s.iter().map(|&w| words[w]).collect::<Vec<_>>().join(" ")))
                .collect();
            let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let o = onto(&refs);
            prop_assert_eq!(match_concepts(&description, &o), oracle(&description, &o));
        }
    }
}
