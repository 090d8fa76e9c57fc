use std::fs;
use std::path::{Path, PathBuf};

use super::{ChartEvent, Era, ItemSpec, StayMeta};
use crate::represent::{AggregationMap, MiniOntology};
use crate::{Error, Result};

pub const EVENTS_FILE: &str = "events.csv";
pub const STAYS_FILE: &str = "stays.csv";
pub const ITEMS_FILE: &str = "items.csv";
pub const AGG_MAP_FILE: &str = "agg_map.csv";
pub const ONTOLOGY_FILE: &str = "ontology.csv";

pub(crate) fn era_str(era: Era) -> &'static str {
    match era {
        Era::Pre => "pre",
        Era::Post => "post",
        Era::Both => "both",
    }
}

struct Sink {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Sink {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = Self {
            writer: csv::Writer::from_writer(file),
            path,
        };
        sink.row(header)?;
        Ok(sink)
    }

    fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| Error::io(&self.path, e.into()))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Writes the five dataset files into `out_dir`, creating it if needed.
/// Returns the paths in the order events, stays, items, agg_map, ontology.
pub fn emit_dataset(
    events: &[ChartEvent],
    stays: &[StayMeta],
    items: &[ItemSpec],
    agg_map: &AggregationMap,
    ontology: &MiniOntology,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(5);

    let mut sink = Sink::create(out_dir, EVENTS_FILE, &["stay_id", "item_id", "hour_offset", "value"])?;
    for e in events {
        sink.row([
            e.stay_id.to_string(),
            e.item_id.to_string(),
            e.hour_offset.to_string(),
            e.value.to_string(),
        ])?;
    }
    written.push(sink.finish()?);

    let mut sink = Sink::create(
        out_dir,
        STAYS_FILE,
        &[
            "stay_id",
            "patient_id",
            "admit_year",
            "age",
            "gender",
            "ethnicity",
            "insurance",
            "icu_mortality",
            "los_days",
        ],
    )?;
    for s in stays {
        sink.row([
            s.stay_id.to_string(),
            s.patient_id.to_string(),
            s.admit_year.to_string(),
            s.age.to_string(),
            s.gender.clone(),
            s.ethnicity.clone(),
            s.insurance.clone(),
            u8::from(s.icu_mortality).to_string(),
            s.los_days.to_string(),
        ])?;
    }
    written.push(sink.finish()?);

    let mut sink = Sink::create(
        out_dir,
        ITEMS_FILE,
        &["item_id", "description", "recorded_unit", "to_canonical_factor", "era"],
    )?;
    for i in items {
        sink.row([
            i.item_id.to_string(),
            i.description.clone(),
            i.recorded_unit.clone(),
            i.to_canonical_factor.to_string(),
            era_str(i.era).to_string(),
        ])?;
    }
    written.push(sink.finish()?);

    let mut sink = Sink::create(
        out_dir,
        AGG_MAP_FILE,
        &["group_id", "group_name", "item_id", "to_canonical_factor"],
    )?;
    for g in &agg_map.groups {
        for (item_id, factor) in &g.members {
            sink.row([
                g.group_id.to_string(),
                g.group_name.clone(),
                item_id.to_string(),
                factor.to_string(),
            ])?;
        }
    }
    written.push(sink.finish()?);

    let mut sink = Sink::create(out_dir, ONTOLOGY_FILE, &["concept_id", "synonym"])?;
    for c in &ontology.concepts {
        for syn in &c.synonyms {
            sink.row([c.concept_id.clone(), syn.join(" ")])?;
        }
    }
    written.push(sink.finish()?);

    Ok(written)
}
