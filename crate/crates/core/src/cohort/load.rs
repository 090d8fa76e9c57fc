use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::Dataset;
use crate::datagen::{ChartEvent, Era, ItemSpec, StayMeta};
use crate::represent::{AggregationGroup, AggregationMap, Concept, MiniOntology};
use crate::{Error, Result};

/// Locations of the delimited-text dataset files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub events: PathBuf,
    pub stays: PathBuf,
    pub items: PathBuf,
    pub agg_map: PathBuf,
    pub ontology: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        use crate::datagen::{AGG_MAP_FILE, EVENTS_FILE, ITEMS_FILE, ONTOLOGY_FILE, STAYS_FILE};
        Self {
            events: dir.join(EVENTS_FILE),
            stays: dir.join(STAYS_FILE),
            items: dir.join(ITEMS_FILE),
            agg_map: dir.join(AGG_MAP_FILE),
            ontology: dir.join(ONTOLOGY_FILE),
        }
    }
}

struct Table {
    file: String,
    header: Vec<String>,
    reader: csv::Reader<File>,
}

struct Row<'a> {
    file: &'a str,
    header: &'a [String],
    line: u64,
    record: csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, col: usize, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.to_string(),
            line: self.line,
            column: self.header[col].clone(),
            message: message.into(),
        }
    }

    fn str(&self, col: usize) -> Result<&str> {
        self.record
            .get(col)
            .ok_or_else(|| self.err(col, "missing field"))
    }

    fn parse<T: FromStr>(&self, col: usize) -> Result<T> {
        let raw = self.str(col)?;
        raw.trim()
            .parse()
            .map_err(|_| self.err(col, format!("cannot parse `{raw}`")))
    }

    fn finite(&self, col: usize) -> Result<f64> {
        let v: f64 = self.parse(col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(col, "value must be finite"))
        }
    }

    fn flag(&self, col: usize) -> Result<bool> {
        match self.str(col)?.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(self.err(col, format!("expected 0/1, got `{other}`"))),
        }
    }
}

impl Table {
    fn open(path: &Path, expected: &[&str]) -> Result<Self> {
        let file_name = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Schema {
                file: file_name.clone(),
                line: 1,
                column: String::new(),
                message: e.to_string(),
            })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header != expected {
            return Err(Error::Schema {
                file: file_name,
                line: 1,
                column: header.join(","),
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        Ok(Self {
            file: file_name,
            header,
            reader,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(&Row<'_>) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| Error::Schema {
                file: self.file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                column: String::new(),
                message: e.to_string(),
            })?;
            if !more {
                return Ok(());
            }
            let row = Row {
                file: &self.file,
                header: &self.header,
                line: record.position().map_or(0, |p| p.line()),
                record: record.clone(),
            };
            if row.record.len() != self.header.len() {
                return Err(row.err(0, format!(
                    "expected {} fields, found {}",
                    self.header.len(),
                    row.record.len()
                )));
            }
            f(&row)?;
        }
    }
}

fn load_items(path: &Path) -> Result<Vec<ItemSpec>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    Table::open(
        path,
        &["item_id", "description", "recorded_unit", "to_canonical_factor", "era"],
    )?
    .for_each(|r| {
        let item_id: u32 = r.parse(0)?;
        if !seen.insert(item_id) {
            return Err(r.err(0, format!("duplicate item id {item_id}")));
        }
        let description = r.str(1)?.to_string();
        if description.trim().is_empty() {
            return Err(r.err(1, "description must be non-empty"));
        }
        let factor = r.finite(3)?;
        if factor <= 0.0 {
            return Err(r.err(3, "to_canonical_factor must be positive"));
        }
        let era = match r.str(4)?.trim() {
            "pre" => Era::Pre,
            "post" => Era::Post,
            "both" => Era::Both,
            other => return Err(r.err(4, format!("unknown era `{other}`"))),
        };
        items.push(ItemSpec {
            item_id,
            description,
            recorded_unit: r.str(2)?.to_string(),
            to_canonical_factor: factor,
            era,
            group_id: None,
        });
        Ok(())
    })?;
    Ok(items)
}

fn load_stays(path: &Path) -> Result<Vec<StayMeta>> {
    let mut stays = Vec::new();
    let mut seen = HashSet::new();
    Table::open(
        path,
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
    )?
    .for_each(|r| {
        let stay_id: u32 = r.parse(0)?;
        if !seen.insert(stay_id) {
            return Err(r.err(0, format!("duplicate stay id {stay_id}")));
        }
        let age = r.finite(3)?;
        if age <= 0.0 {
            return Err(r.err(3, "age must be positive"));
        }
        let los_days = r.finite(8)?;
        if los_days <= 0.0 {
            return Err(r.err(8, "los_days must be positive"));
        }
        stays.push(StayMeta {
            stay_id,
            patient_id: r.parse(1)?,
            admit_year: r.parse(2)?,
            age,
            gender: r.str(4)?.to_string(),
            ethnicity: r.str(5)?.to_string(),
            insurance: r.str(6)?.to_string(),
            icu_mortality: r.flag(7)?,
            los_days,
        });
        Ok(())
    })?;
    Ok(stays)
}

fn load_events(path: &Path, items: &HashSet<u32>) -> Result<Vec<ChartEvent>> {
    let mut events = Vec::new();
    Table::open(path, &["stay_id", "item_id", "hour_offset", "value"])?.for_each(|r| {
        let item_id: u32 = r.parse(1)?;
        if !items.contains(&item_id) {
            return Err(Error::UnknownItem {
                item_id,
                file: r.file.to_string(),
                line: r.line,
            });
        }
        let hour_offset = r.finite(2)?;
        if hour_offset < 0.0 {
            return Err(r.err(2, "hour_offset must be non-negative"));
        }
        events.push(ChartEvent {
            stay_id: r.parse(0)?,
            item_id,
            hour_offset,
            value: r.finite(3)?,
        });
        Ok(())
    })?;
    Ok(events)
}

/// Loads events, stays and items; every event must reference a known item.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let items = load_items(&paths.items)?;
    let stays = load_stays(&paths.stays)?;
    let ids: HashSet<u32> = items.iter().map(|i| i.item_id).collect();
    let events = load_events(&paths.events, &ids)?;
    Ok(Dataset {
        events,
        stays,
        items,
    })
}

pub fn load_agg_map(path: &Path) -> Result<AggregationMap> {
    let mut groups: Vec<AggregationGroup> = Vec::new();
    let mut index: HashMap<u32, usize> = HashMap::new();
    Table::open(path, &["group_id", "group_name", "item_id", "to_canonical_factor"])?.for_each(|r| {
        let group_id: u32 = r.parse(0)?;
        let name = r.str(1)?.to_string();
        let factor = r.finite(3)?;
        if factor <= 0.0 {
            return Err(r.err(3, "to_canonical_factor must be positive"));
        }
        let g = *index.entry(group_id).or_insert_with(|| {
            groups.push(AggregationGroup {
                group_id,
                group_name: name.clone(),
                members: Vec::new(),
            });
            groups.len() - 1
        });
        if groups[g].group_name != name {
            return Err(r.err(1, format!("group {group_id} has conflicting names")));
        }
        groups[g].members.push((r.parse(2)?, factor));
        Ok(())
    })?;
    let map = AggregationMap { groups };
    map.validate()?;
    Ok(map)
}

pub fn load_ontology(path: &Path) -> Result<MiniOntology> {
    let mut concepts: Vec<Concept> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    Table::open(path, &["concept_id", "synonym"])?.for_each(|r| {
        let id = r.str(0)?.trim().to_string();
        let tokens = crate::represent::tokenize(r.str(1)?);
        if tokens.is_empty() {
            return Err(r.err(1, "synonym must contain at least one token"));
        }
        let c = *index.entry(id.clone()).or_insert_with(|| {
            concepts.push(Concept {
                concept_id: id,
                synonyms: Vec::new(),
            });
            concepts.len() - 1
        });
        concepts[c].synonyms.push(tokens);
        Ok(())
    })?;
    Ok(MiniOntology { concepts })
}
