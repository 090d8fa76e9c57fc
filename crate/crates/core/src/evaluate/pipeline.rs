use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cohort::{
    bucket_hourly, events_by_stay, select_cohort, CohortCriteria, Dataset, DemographicEncoder,
    HourlyTensor, ItemColumns,
};
use crate::datagen::{ItemSpec, StayMeta};
use crate::models::FlatDataset;
use crate::par::par_map;
use crate::represent::{
    build_aggregate, build_concept_span, triplet_columns, AggregationMap, ConceptMapping,
    ImputedTensor, MiniOntology, Normalizer, PcaAccumulator, PcaModel,
};
use crate::represent::simple_impute_with_columns;
use crate::{Error, Result};

/// Number of fixed accumulation chunks for PCA, independent of thread count.
const PCA_CHUNKS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mortality,
    LongLos,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mortality => "mortality",
            Task::LongLos => "long_los",
        }
    }

    pub fn label(self, stay: &StayMeta) -> bool {
        match self {
            Task::Mortality => stay.icu_mortality,
            Task::LongLos => stay.long_los(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mortality" => Ok(Task::Mortality),
            "long_los" => Ok(Task::LongLos),
            _ => Err(Error::Config(format!("unknown task `{s}` (expected mortality or long_los)"))),
        }
    }
}

/// Feature representation of the first day of a stay. `Demographics` keeps
/// only the static one-hot block every other representation also carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Raw,
    Pca,
    ConceptSpan,
    Aggregate,
    Demographics,
}

impl Representation {
    pub const ALL: [Representation; 5] = [
        Representation::Raw,
        Representation::Pca,
        Representation::ConceptSpan,
        Representation::Aggregate,
        Representation::Demographics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Pca => "pca",
            Representation::ConceptSpan => "concept_span",
            Representation::Aggregate => "aggregate",
            Representation::Demographics => "demographics",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown representation `{s}`")))
    }
}

/// Selected stays with their hourly grids precomputed once. Everything here is
/// label-free and independent of any train/test split; statistics that are
/// fit on data live in [`RepArtifacts`].
#[derive(Clone, Debug)]
pub struct PreparedCohort {
    pub stays: Vec<StayMeta>,
    pub items: Vec<ItemSpec>,
    pub hours: usize,
    /// Principal components kept per hour.
    pub pca_k: usize,
    raw: Vec<HourlyTensor>,
    aggregate: Vec<HourlyTensor>,
    concepts: ConceptMapping,
    demo_columns: Vec<String>,
    demo: Vec<Vec<f32>>,
}

impl PreparedCohort {
    /// Selects the cohort and buckets every stay onto the union item
    /// vocabulary. `pca_k` defaults to the number of aggregation groups.
    pub fn new(
        dataset: &Dataset,
        agg_map: &AggregationMap,
        ontology: &MiniOntology,
        criteria: &CohortCriteria,
        pca_k: Option<usize>,
    ) -> Result<Self> {
        criteria.validate()?;
        agg_map.validate()?;
        ontology.validate()?;
        let stays = select_cohort(&dataset.stays, criteria);
        if stays.is_empty() {
            return Err(Error::Config("cohort selection kept no stays".into()));
        }
        let vocabulary = ItemColumns::from_items(&dataset.items);
        let by_stay = events_by_stay(&dataset.events);
        let raw: Vec<HourlyTensor> = par_map(&stays, |s| {
            let events = by_stay.get(&s.stay_id).map_or(&[][..], Vec::as_slice);
            bucket_hourly(events, s, criteria, &vocabulary)
        });
        let aggregate = par_map(&raw, |t| build_aggregate(t, agg_map))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let encoder = DemographicEncoder::fit(&stays, false);
        let demo = stays
            .iter()
            .map(|s| Ok(encoder.encode(s)?.into_iter().map(|v| v as f32).collect()))
            .collect::<Result<Vec<Vec<f32>>>>()?;
        Ok(Self {
            pca_k: pca_k.unwrap_or(agg_map.groups.len()).max(1),
            hours: criteria.censor_hours,
            items: dataset.items.clone(),
            concepts: ConceptMapping::new(&dataset.items, ontology),
            demo_columns: encoder.column_ids(),
            stays,
            raw,
            aggregate,
            demo,
        })
    }

    pub fn len(&self) -> usize {
        self.stays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }

    pub fn labels(&self, task: Task) -> Vec<bool> {
        self.stays.iter().map(|s| task.label(s)).collect()
    }

    pub fn year_range(&self) -> (i32, i32) {
        let years = self.stays.iter().map(|s| s.admit_year);
        (years.clone().min().unwrap_or(0), years.max().unwrap_or(0))
    }

    pub fn raw_tensor(&self, i: usize) -> &HourlyTensor {
        &self.raw[i]
    }

    pub fn aggregate_tensor(&self, i: usize) -> &HourlyTensor {
        &self.aggregate[i]
    }

    pub fn concept_mapping(&self) -> &ConceptMapping {
        &self.concepts
    }

    /// Copy with the given stays only, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &[HourlyTensor]| idx.iter().map(|&i| v[i].clone()).collect();
        Self {
            stays: idx.iter().map(|&i| self.stays[i].clone()).collect(),
            items: self.items.clone(),
            hours: self.hours,
            pca_k: self.pca_k,
            raw: pick(&self.raw),
            aggregate: pick(&self.aggregate),
            concepts: self.concepts.clone(),
            demo_columns: self.demo_columns.clone(),
            demo: idx.iter().map(|&i| self.demo[i].clone()).collect(),
        }
    }
}

/// Statistics fit on the training side of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct RepArtifacts {
    pub representation: Representation,
    /// Item-level statistics used to z-score items before concept averaging.
    pub item_stats: Option<Normalizer>,
    pub normalizer: Option<Normalizer>,
    pub pca: Option<PcaModel>,
}

impl RepArtifacts {
    /// Serialized artifacts, one block per fitted part.
    pub fn to_text(&self) -> String {
        let mut s = format!("representation,{}\n", self.representation);
        for part in [&self.item_stats, &self.normalizer].into_iter().flatten() {
            s.push_str(&part.to_text());
        }
        if let Some(p) = &self.pca {
            s.push_str(&p.to_text());
        }
        s
    }
}

/// Fits normalization (and PCA or item statistics where needed) on `train`.
pub fn fit_representation(
    cohort: &PreparedCohort,
    rep: Representation,
    train: &[usize],
) -> Result<RepArtifacts> {
    if train.is_empty() {
        return Err(Error::Config("representation fit needs training stays".into()));
    }
    let mut art = RepArtifacts {
        representation: rep,
        item_stats: None,
        normalizer: None,
        pca: None,
    };
    match rep {
        Representation::Raw => {
            art.normalizer = Some(Normalizer::fit(train.iter().map(|&i| &cohort.raw[i])));
        }
        Representation::Aggregate => {
            art.normalizer = Some(Normalizer::fit(train.iter().map(|&i| &cohort.aggregate[i])));
        }
        Representation::ConceptSpan => {
            let stats = Normalizer::fit(train.iter().map(|&i| &cohort.raw[i]));
            let spans = par_map(train, |&i| build_concept_span(&cohort.raw[i], &cohort.concepts, &stats));
            art.normalizer = Some(Normalizer::fit(&spans));
            art.item_stats = Some(stats);
        }
        Representation::Pca => {
            let norm = Normalizer::fit(train.iter().map(|&i| &cohort.raw[i]));
            let columns = triplet_columns(&norm.columns);
            let dim = columns.len();
            let chunks: Vec<&[usize]> = train.chunks(train.len().div_ceil(PCA_CHUNKS)).collect();
            let parts = par_map(&chunks, |chunk| {
                let mut acc = PcaAccumulator::new(dim);
                for &i in *chunk {
                    acc.add_tensor(&simple_impute_with_columns(&norm.apply(&cohort.raw[i]), columns.clone()));
                }
                acc
            });
            let mut acc = PcaAccumulator::new(dim);
            for p in &parts {
                acc.merge(p);
            }
            art.pca = Some(acc.finish(columns, cohort.pca_k.min(dim))?);
            art.normalizer = Some(norm);
        }
        Representation::Demographics => {}
    }
    Ok(art)
}

/// Column ids of the flattened features: `h{hour}:{feature}` in hour-major
/// order, followed by the demographic block.
pub fn feature_columns(cohort: &PreparedCohort, art: &RepArtifacts) -> Arc<[String]> {
    let per_hour: Vec<String> = match (&art.pca, &art.normalizer) {
        (Some(p), _) => p.column_ids(),
        (None, Some(n)) => triplet_columns(&n.columns).to_vec(),
        (None, None) => Vec::new(),
    };
    let mut cols = Vec::with_capacity(cohort.hours * per_hour.len() + cohort.demo_columns.len());
    for h in 0..cohort.hours {
        cols.extend(per_hour.iter().map(|c| format!("h{h:02}:{c}")));
    }
    cols.extend(cohort.demo_columns.iter().cloned());
    cols.into()
}

fn imputed(cohort: &PreparedCohort, art: &RepArtifacts, i: usize, columns: &Arc<[String]>) -> Option<ImputedTensor> {
    let norm = art.normalizer.as_ref()?;
    let tensor = match art.representation {
        Representation::Raw | Representation::Pca => norm.apply(&cohort.raw[i]),
        Representation::Aggregate => norm.apply(&cohort.aggregate[i]),
        Representation::ConceptSpan => {
            let stats = art.item_stats.as_ref()?;
            norm.apply(&build_concept_span(&cohort.raw[i], &cohort.concepts, stats))
        }
        Representation::Demographics => return None,
    };
    Some(simple_impute_with_columns(&tensor, columns.clone()))
}

fn stay_features(cohort: &PreparedCohort, art: &RepArtifacts, i: usize, triplets: &Arc<[String]>) -> Result<Vec<f32>> {
    let mut out = Vec::new();
    if let Some(t) = imputed(cohort, art, i, triplets) {
        match &art.pca {
            Some(p) => out.extend(p.project(&t)?.as_slice().iter().map(|&v| v as f32)),
            None => out.extend(t.as_slice().iter().map(|&v| v as f32)),
        }
    }
    out.extend_from_slice(&cohort.demo[i]);
    Ok(out)
}

/// Design matrix for the stays `idx` under fitted artifacts. Labels are those
/// of `task`.
pub fn flatten(
    cohort: &PreparedCohort,
    art: &RepArtifacts,
    idx: &[usize],
    task: Task,
) -> Result<FlatDataset> {
    let columns = feature_columns(cohort, art);
    let triplets = art
        .normalizer
        .as_ref()
        .map_or_else(|| Arc::from(Vec::<String>::new()), |n| triplet_columns(&n.columns));
    let rows = par_map(idx, |&i| stay_features(cohort, art, i, &triplets));
    let mut x = Vec::with_capacity(idx.len() * columns.len());
    for r in rows {
        x.extend(r?);
    }
    FlatDataset::new(
        columns,
        idx.iter().map(|&i| cohort.stays[i].stay_id).collect(),
        idx.iter().map(|&i| task.label(&cohort.stays[i])).collect(),
        x,
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::datagen::{generate, DriftScenario};

    pub(crate) fn small_cohort(scenario: &DriftScenario) -> PreparedCohort {
        let g = generate(scenario).unwrap();
        let dataset = Dataset {
            events: g.events.clone(),
            stays: g.stays.clone(),
            items: g.items.clone(),
        };
        PreparedCohort::new(&dataset, &g.agg_map, &g.ontology, &CohortCriteria::default(), None).unwrap()
    }

    pub(crate) fn tiny_scenario() -> DriftScenario {
        DriftScenario {
            n_stays_per_year: 40,
            first_year: 2001,
            last_year: 2005,
            switch_year: 2004,
            n_groups: 6,
            extra_items_post: 2,
            frequency_shift: Vec::new(),
            value_shift: Vec::new(),
            seed: 5,
            ..DriftScenario::default()
        }
    }

    #[test]
    fn flattened_width_matches_columns() {
        let c = small_cohort(&tiny_scenario());
        let train: Vec<usize> = (0..c.len()).filter(|&i| c.stays[i].admit_year < 2004).collect();
        for rep in Representation::ALL {
            let art = fit_representation(&c, rep, &train).unwrap();
            let d = flatten(&c, &art, &[0, 1, 2], Task::Mortality).unwrap();
            assert_eq!(d.dim(), feature_columns(&c, &art).len(), "{rep}");
            assert_eq!(d.n_rows(), 3);
            let demo = c.demo_columns.len();
            let per_hour = (d.dim() - demo) / c.hours;
            match rep {
                Representation::Raw => assert_eq!(per_hour, 3 * c.items.len()),
                Representation::Aggregate => assert_eq!(per_hour, 18),
                Representation::Pca => assert_eq!(per_hour, 6),
                Representation::Demographics => assert_eq!(per_hour, 0),
                Representation::ConceptSpan => assert!(per_hour > 0),
            }
            assert!(d.columns[d.dim() - 1].starts_with("demo:"));
        }
    }

    #[test]
    fn artifacts_ignore_stays_outside_train() {
        let c = small_cohort(&tiny_scenario());
        let train: Vec<usize> = (0..c.len()).filter(|&i| c.stays[i].admit_year < 2004).collect();
        let sub = c.subset(&train);
        let local: Vec<usize> = (0..sub.len()).collect();
        for rep in [Representation::Raw, Representation::Pca, Representation::ConceptSpan] {
            let a = fit_representation(&c, rep, &train).unwrap();
            let b = fit_representation(&sub, rep, &local).unwrap();
            assert_eq!(a.to_text(), b.to_text(), "{rep}");
        }
    }

    #[test]
    fn names_round_trip() {
        for rep in Representation::ALL {
            assert_eq!(rep.as_str().parse::<Representation>().unwrap(), rep);
        }
        assert_eq!("long_los".parse::<Task>().unwrap(), Task::LongLos);
        assert!("los".parse::<Task>().is_err());
    }
}
