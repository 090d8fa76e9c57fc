use proptest::prelude::*;

use yearshift::cohort::{CohortCriteria, Dataset};
use yearshift::datagen::{generate, DriftScenario};
use yearshift::evaluate::{eval_representation, EvalOptions, EvalReport, PreparedCohort, RegimeKind, Representation, Task};
use yearshift::models::{LrSpace, ModelFamily, RfSpace, SearchSpec};

fn cohort() -> PreparedCohort {
    let g = generate(&DriftScenario {
        n_stays_per_year: 50,
        first_year: 2001,
        last_year: 2005,
        switch_year: 2004,
        n_groups: 6,
        extra_items_post: 2,
        frequency_shift: vec![],
        value_shift: vec![],
        seed: 8,
        ..DriftScenario::default()
    })
    .unwrap();
    let ds = Dataset {
        events: g.events,
        stays: g.stays,
        items: g.items,
    };
    PreparedCohort::new(&ds, &g.agg_map, &g.ontology, &CohortCriteria::default(), Some(4)).unwrap()
}

fn opts() -> EvalOptions {
    EvalOptions {
        search: SearchSpec {
            n_draws: 2,
            cv_folds: 2,
            lr: LrSpace {
                max_iter: 40,
                ..LrSpace::default()
            },
            rf: RfSpace {
                n_estimators: (5, 10),
                max_depth: (2, 4),
                ..RfSpace::default()
            },
            ..SearchSpec::default()
        },
        n_boot: 10,
        seed: 4,
        keep_artifacts: true,
        ..EvalOptions::default()
    }
}

/// Artifacts of fits whose test year is at most `year`.
fn artifacts_up_to(reports: &[EvalReport], year: i32) -> Vec<(String, String)> {
    reports
        .iter()
        .flat_map(|r| {
            r.artifacts.iter().filter(move |(name, _)| {
                let label = name.split('.').next().unwrap_or("");
                label == "window" || label.parse::<i32>().is_ok_and(|y| y <= year)
            })
        })
        .cloned()
        .collect()
}

fn run_all(c: &PreparedCohort) -> Vec<EvalReport> {
    let regimes = [
        RegimeKind::FixedWindow {
            first_year: 2001,
            last_year: 2002,
        },
        RegimeKind::PriorYear,
        RegimeKind::FullHistory,
    ];
    let mut out = Vec::new();
    for rep in Representation::ALL {
        for regime in regimes {
            out.extend(
                eval_representation(c, rep, regime, &[Task::Mortality, Task::LongLos], &[ModelFamily::Lr, ModelFamily::Rf], &opts())
                    .unwrap(),
            );
        }
    }
    out
}

#[test]
fn permuting_last_year_labels_keeps_every_artifact() {
    let base = cohort();
    let mut permuted = base.clone();
    let idx: Vec<usize> = (0..base.len()).filter(|&i| base.stays[i].admit_year == 2005).collect();
    // rotate by one so every stay takes its neighbour's labels
    for (k, &i) in idx.iter().enumerate() {
        let j = idx[(k + 1) % idx.len()];
        permuted.stays[i].icu_mortality = base.stays[j].icu_mortality;
        permuted.stays[i].los_days = base.stays[j].los_days;
    }
    let a = run_all(&base);
    let b = run_all(&permuted);
    let (fa, fb) = (artifacts_up_to(&a, 2005), artifacts_up_to(&b, 2005));
    assert!(fa.len() > 50);
    assert_eq!(fa, fb);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn permuting_any_year_keeps_earlier_fits(year in 2003i32..=2005, shift in 1usize..20) {
        let base = cohort();
        let mut permuted = base.clone();
        let idx: Vec<usize> = (0..base.len()).filter(|&i| base.stays[i].admit_year == year).collect();
        for (k, &i) in idx.iter().enumerate() {
            let j = idx[(k + shift) % idx.len()];
            permuted.stays[i].icu_mortality = base.stays[j].icu_mortality;
            permuted.stays[i].los_days = base.stays[j].los_days;
        }
        let rep = Representation::ALL[(shift + year as usize) % Representation::ALL.len()];
        let run = |c: &PreparedCohort| {
            eval_representation(c, rep, RegimeKind::FullHistory, &[Task::LongLos], &[ModelFamily::Rf], &opts()).unwrap()
        };
        prop_assert_eq!(artifacts_up_to(&run(&base), year), artifacts_up_to(&run(&permuted), year));
    }
}
