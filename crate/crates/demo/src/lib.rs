//! Browser bindings for three small yearshift operations.

use wasm_bindgen::prelude::*;

use yearshift::cohort::CohortCriteria;
use yearshift::datagen::{generate, DriftScenario};
use yearshift::evaluate::{auroc, eval_temporal, EvalOptions, PreparedCohort, RegimeKind, Representation, Task};
use yearshift::models::{LrSpace, ModelFamily, SearchSpec};
use yearshift::represent::match_concepts;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("cannot read {what} `{s}`")))
        .collect()
}

fn parse_label(s: &str) -> Result<bool, ()> {
    match s {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(()),
    }
}

/// AUROC of comma or space separated scores against 0/1 labels.
pub fn auroc_of_text(scores: &str, labels: &str) -> Result<f64, String> {
    let s: Vec<f64> = parse_list(scores, "score")?;
    let raw: Vec<String> = parse_list(labels, "label")?;
    let l = raw
        .iter()
        .map(|x| parse_label(x).map_err(|_| format!("label `{x}` is not 0 or 1")))
        .collect::<Result<Vec<bool>, _>>()?;
    if s.len() != l.len() {
        return Err(format!("{} scores but {} labels", s.len(), l.len()));
    }
    auroc(&s, &l).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn demo_auroc(scores: &str, labels: &str) -> Result<f64, JsError> {
    auroc_of_text(scores, labels).map_err(|e| JsError::new(&e))
}

/// Ontology concepts matched by an item description, one per line. Uses the
/// ontology of the default synthetic scenario.
pub fn concepts_of(description: &str) -> Result<String, String> {
    let scenario = DriftScenario {
        n_stays_per_year: 1,
        ..DriftScenario::default()
    };
    let g = generate(&scenario).map_err(|e| e.to_string())?;
    let found = match_concepts(description, &g.ontology);
    let names: Vec<String> = found
        .iter()
        .map(|id| {
            let name = g
                .ontology
                .concepts
                .iter()
                .find(|c| &c.concept_id == id)
                .and_then(|c| c.synonyms.first())
                .map(|s| s.join(" "))
                .unwrap_or_default();
            format!("{id}\t{name}")
        })
        .collect();
    Ok(names.join("\n"))
}

#[wasm_bindgen]
pub fn demo_concepts(description: &str) -> Result<String, JsError> {
    concepts_of(description).map_err(|e| JsError::new(&e))
}

/// Runs a small drift scenario and returns `year,raw,aggregate` lines of
/// per-year mortality AUROC for logistic regression trained on all prior years.
pub fn drift_table(stays_per_year: u32, switch_year: i32, seed: u32) -> Result<String, String> {
    let err = |e: yearshift::Error| e.to_string();
    let scenario = DriftScenario {
        n_stays_per_year: stays_per_year as usize,
        first_year: 2001,
        last_year: 2008,
        switch_year,
        n_groups: 12,
        extra_items_post: 4,
        frequency_shift: vec![],
        value_shift: vec![],
        seed: u64::from(seed),
        ..DriftScenario::default()
    };
    let g = generate(&scenario).map_err(err)?;
    let dataset = yearshift::cohort::Dataset {
        events: g.events,
        stays: g.stays,
        items: g.items,
    };
    let cohort = PreparedCohort::new(&dataset, &g.agg_map, &g.ontology, &CohortCriteria::default(), None).map_err(err)?;
    let opts = EvalOptions {
        search: SearchSpec {
            n_draws: 4,
            cv_folds: 2,
            seed: u64::from(seed),
            lr: LrSpace {
                max_iter: 100,
                ..LrSpace::default()
            },
            ..SearchSpec::default()
        },
        n_boot: 20,
        seed: u64::from(seed),
        ..EvalOptions::default()
    };
    let run = |rep| eval_temporal(&cohort, Task::Mortality, rep, ModelFamily::Lr, RegimeKind::FullHistory, &opts).map_err(err);
    let raw = run(Representation::Raw)?;
    let agg = run(Representation::Aggregate)?;
    let fmt = |v: Option<f64>| v.map_or("".to_string(), |a| format!("{a:.4}"));
    let mut out = String::from("year,raw,aggregate\n");
    for y in scenario.first_year..=scenario.last_year {
        let (r, a) = (raw.year(y).map(|x| x.auroc), agg.year(y).map(|x| x.auroc));
        if r.is_some() || a.is_some() {
            out.push_str(&format!("{y},{},{}\n", fmt(r), fmt(a)));
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn demo_drift(stays_per_year: u32, switch_year: i32, seed: u32) -> Result<String, JsError> {
    drift_table(stays_per_year, switch_year, seed).map_err(|e| JsError::new(&e))
}
