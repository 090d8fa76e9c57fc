use std::fs;

use yearshift::cohort::{load_agg_map, load_dataset, load_ontology, DatasetPaths};
use yearshift::datagen::{emit_dataset, generate, DriftScenario};

fn small(n: usize) -> DriftScenario {
    DriftScenario {
        n_stays_per_year: n,
        first_year: 2001,
        last_year: 2004,
        switch_year: 2003,
        n_groups: 8,
        extra_items_post: 3,
        frequency_shift: vec![],
        value_shift: vec![],
        seed: 11,
        ..DriftScenario::default()
    }
}

#[test]
fn emitted_files_load_back_equal() {
    let g = generate(&small(30)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_dataset(&g.events, &g.stays, &g.items, &g.agg_map, &g.ontology, dir.path()).unwrap();
    let paths = DatasetPaths::in_dir(dir.path());
    let back = load_dataset(&paths).unwrap();
    assert_eq!(back.events, g.events);
    assert_eq!(back.stays, g.stays);
    let strip = |items: &[yearshift::datagen::ItemSpec]| {
        items
            .iter()
            .map(|i| (i.item_id, i.description.clone(), i.recorded_unit.clone(), i.to_canonical_factor, i.era))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&back.items), strip(&g.items));
    assert_eq!(load_agg_map(&paths.agg_map).unwrap(), g.agg_map);
    assert_eq!(load_ontology(&paths.ontology).unwrap(), g.ontology);
}

#[test]
fn empty_stay_set_writes_headers_only() {
    let g = generate(&small(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_dataset(&[], &[], &g.items, &g.agg_map, &g.ontology, dir.path()).unwrap();
    for p in &written[..2] {
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1, "{}", p.display());
    }
    let back = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
    assert!(back.events.is_empty() && back.stays.is_empty());
}

#[test]
fn event_file_rows_match_generated_events() {
    // 25 stays per year over four years
    let g = generate(&small(25)).unwrap();
    assert_eq!(g.stays.len(), 100);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_dataset(&g.events, &g.stays, &g.items, &g.agg_map, &g.ontology, dir.path()).unwrap();
    let rows = fs::read_to_string(&written[0]).unwrap().lines().count() - 1;
    let brute: usize = g
        .stays
        .iter()
        .map(|s| g.events.iter().filter(|e| e.stay_id == s.stay_id).count())
        .sum();
    assert_eq!(rows, brute);
}

#[test]
fn emission_is_bit_reproducible() {
    let g = generate(&small(20)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let wa = emit_dataset(&g.events, &g.stays, &g.items, &g.agg_map, &g.ontology, a.path()).unwrap();
    let wb = emit_dataset(&g.events, &g.stays, &g.items, &g.agg_map, &g.ontology, b.path()).unwrap();
    for (x, y) in wa.iter().zip(&wb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}
