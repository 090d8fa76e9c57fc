use proptest::prelude::*;

use super::pipeline::tests::{small_cohort, tiny_scenario};
use super::*;
use crate::models::{LrSpace, RfSpace};

fn stay(id: u32, year: i32) -> StayMeta {
    StayMeta {
        stay_id: id,
        patient_id: id,
        admit_year: year,
        age: 60.0,
        gender: if id % 2 == 0 { "F".into() } else { "M".into() },
        ethnicity: "WHITE".into(),
        insurance: "Medicare".into(),
        icu_mortality: id % 3 == 0,
        los_days: 2.0,
    }
}

fn years_of(stays: &[StayMeta], idx: &[usize]) -> Vec<i32> {
    let mut y: Vec<i32> = idx.iter().map(|&i| stays[i].admit_year).collect();
    y.sort_unstable();
    y.dedup();
    y
}

fn quick() -> EvalOptions {
    EvalOptions {
        search: SearchSpec {
            n_draws: 2,
            cv_folds: 2,
            lr: LrSpace {
                max_iter: 60,
                ..LrSpace::default()
            },
            rf: RfSpace {
                n_estimators: (10, 20),
                max_depth: (3, 6),
                ..RfSpace::default()
            },
            ..SearchSpec::default()
        },
        n_boot: 20,
        seed: 3,
        ..EvalOptions::default()
    }
}

#[test]
fn regime_splits_pick_expected_years() {
    let stays: Vec<StayMeta> = (0..120).map(|i| stay(i, 2001 + (i % 12) as i32)).collect();
    let (train, test) = split_regime(&stays, RegimeKind::FullHistory, 2006).unwrap();
    assert_eq!(years_of(&stays, &train), (2001..=2005).collect::<Vec<_>>());
    assert_eq!(years_of(&stays, &test), vec![2006]);
    let (train, _) = split_regime(&stays, RegimeKind::PriorYear, 2006).unwrap();
    assert_eq!(years_of(&stays, &train), vec![2005]);
    let window = RegimeKind::FixedWindow {
        first_year: 2001,
        last_year: 2002,
    };
    let (train, _) = split_regime(&stays, window, 2010).unwrap();
    assert_eq!(years_of(&stays, &train), vec![2001, 2002]);
}

#[test]
fn thirty_stay_fixture_matches_manual_partition() {
    // ten stays per year, ids 0..9 in 2001, 10..19 in 2002, 20..29 in 2003
    let stays: Vec<StayMeta> = (0..30).map(|i| stay(i, 2001 + (i / 10) as i32)).collect();
    let ids = |idx: Vec<usize>| idx.into_iter().map(|i| stays[i].stay_id).collect::<Vec<u32>>();
    let (train, test) = split_regime(&stays, RegimeKind::FullHistory, 2003).unwrap();
    assert_eq!(ids(train), (0..20).collect::<Vec<u32>>());
    assert_eq!(ids(test), (20..30).collect::<Vec<u32>>());
    let (train, test) = split_regime(&stays, RegimeKind::PriorYear, 2003).unwrap();
    assert_eq!(ids(train), (10..20).collect::<Vec<u32>>());
    assert_eq!(ids(test), (20..30).collect::<Vec<u32>>());
    let (train, test) = split_regime(&stays, RegimeKind::PriorYear, 2002).unwrap();
    assert_eq!(ids(train), (0..10).collect::<Vec<u32>>());
    assert_eq!(ids(test), (10..20).collect::<Vec<u32>>());
}

#[test]
fn empty_splits_name_the_year() {
    let stays: Vec<StayMeta> = (0..10).map(|i| stay(i, 2003)).collect();
    match split_regime(&stays, RegimeKind::PriorYear, 2003) {
        Err(Error::EmptySplit { side: "train", year: 2003 }) => {}
        other => panic!("unexpected {other:?}"),
    }
    match split_regime(&stays, RegimeKind::FullHistory, 2004) {
        Err(Error::EmptySplit { side: "test", year: 2004 }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(split_regime(&stays, RegimeKind::YearAgnostic, 2003).is_err());
}

#[test]
fn regime_names_round_trip() {
    for s in ["year_agnostic", "prior_year", "full_history", "fixed_window:2001-2002"] {
        assert_eq!(s.parse::<RegimeKind>().unwrap().to_string(), s);
    }
    assert!("fixed_window:2003-2001".parse::<RegimeKind>().is_err());
    assert!("fixed".parse::<RegimeKind>().is_err());
}

#[test]
fn test_years_default_and_window_check() {
    let spec = RegimeSpec::new(RegimeKind::FullHistory);
    assert_eq!(spec.test_years((2001, 2012)).unwrap(), (2003..=2012).collect::<Vec<_>>());
    let late = RegimeSpec::new(RegimeKind::FixedWindow {
        first_year: 2001,
        last_year: 2003,
    });
    assert!(late.test_years((2001, 2012)).is_err());
}

#[test]
fn single_class_subgroup_is_flagged() {
    let stays: Vec<StayMeta> = (0..80).map(|i| stay(i, 2005)).collect();
    let scores: Vec<f64> = (0..80).map(|i| f64::from(i) / 80.0).collect();
    // every F stay is positive, M stays alternate
    let labels: Vec<bool> = (0..80).map(|i| i % 2 == 0 || i % 4 == 1).collect();
    let inputs = SubgroupInputs {
        stays: stays.iter().collect(),
        scores: &scores,
        labels: &labels,
        test_year: 2005,
        n_train: 10,
    };
    let out = eval_subgroups(&inputs, Attribute::Gender, 30, 20, 1);
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].value, "F");
    assert!(out[0].metric.is_none());
    assert!(out[1].metric.is_some());
    assert_eq!(out[1].n_test, 40);
    let small = eval_subgroups(&inputs, Attribute::Gender, 41, 20, 1);
    assert!(small.iter().all(|g| g.metric.is_none()));
}

#[test]
fn temporal_run_records_every_year() {
    let c = small_cohort(&tiny_scenario());
    let r = eval_temporal(&c, Task::LongLos, Representation::Aggregate, ModelFamily::Lr, RegimeKind::FullHistory, &quick()).unwrap();
    let covered: Vec<i32> = r
        .years
        .iter()
        .map(|y| y.test_year)
        .chain(r.skipped.iter().filter_map(|s| s.test_year))
        .collect();
    assert_eq!(covered, vec![2003, 2004, 2005]);
    for y in &r.years {
        assert!((0.0..=1.0).contains(&y.auroc) && y.stderr >= 0.0 && y.n_test > 0);
    }
    // max drop recomputed by an independent fold over the year results
    let series: Vec<f64> = r.years.iter().map(|y| y.auroc).collect();
    let by_fold = series.iter().skip(1).fold(None::<f64>, |m, &a| Some(m.map_or(a, |m| if a < m { a } else { m })));
    assert_eq!(r.max_drop(), by_fold.map(|m| series[0] - m));
    let again = eval_temporal(&c, Task::LongLos, Representation::Aggregate, ModelFamily::Lr, RegimeKind::FullHistory, &quick()).unwrap();
    assert_eq!(r, again);
}

#[test]
fn fixed_window_fits_once() {
    let c = small_cohort(&tiny_scenario());
    let opts = EvalOptions {
        keep_artifacts: true,
        ..quick()
    };
    let window = RegimeKind::FixedWindow {
        first_year: 2001,
        last_year: 2002,
    };
    let r = eval_temporal(&c, Task::LongLos, Representation::Raw, ModelFamily::Rf, window, &opts).unwrap();
    assert_eq!(r.years.len() + r.skipped.len(), 3);
    assert_eq!(r.artifacts.len(), 2);
    assert!(r.years.iter().all(|y| y.n_train == r.years[0].n_train));
}

#[test]
fn flipped_duplicate_is_unlearnable() {
    let c = small_cohort(&tiny_scenario());
    let idx: Vec<usize> = (0..c.len()).chain(0..c.len()).collect();
    let mut dup = c.subset(&idx);
    for (k, s) in dup.stays.iter_mut().enumerate() {
        s.stay_id = k as u32;
        if k >= c.len() {
            s.los_days = if s.long_los() { 1.0 } else { 5.0 };
        }
    }
    let mut opts = EvalOptions {
        agnostic_repeats: 2,
        ..quick()
    };
    // enough draws to include a strongly regularized candidate
    opts.search.n_draws = 8;
    let r = eval_year_agnostic(&dup, Task::LongLos, Representation::Aggregate, ModelFamily::Lr, &opts).unwrap();
    assert_eq!(r.folds.len(), 4);
    let (mean, _) = r.average_auroc().unwrap();
    assert!((mean - 0.5).abs() < 0.08, "mean {mean}");
}

#[test]
fn test_year_labels_do_not_reach_training_artifacts() {
    let c = small_cohort(&tiny_scenario());
    let opts = EvalOptions {
        keep_artifacts: true,
        ..quick()
    };
    let mut scrambled = c.clone();
    // reverse the labels of the last year only
    let last: Vec<usize> = (0..c.len()).filter(|&i| c.stays[i].admit_year == 2005).collect();
    for (a, b) in last.iter().zip(last.iter().rev()) {
        scrambled.stays[*a].los_days = c.stays[*b].los_days;
        scrambled.stays[*a].icu_mortality = c.stays[*b].icu_mortality;
    }
    for rep in [Representation::Pca, Representation::ConceptSpan] {
        let a = eval_representation(&c, rep, RegimeKind::FullHistory, &[Task::LongLos], &[ModelFamily::Lr], &opts).unwrap();
        let b = eval_representation(&scrambled, rep, RegimeKind::FullHistory, &[Task::LongLos], &[ModelFamily::Lr], &opts).unwrap();
        assert!(!a[0].artifacts.is_empty());
        assert_eq!(a[0].artifacts, b[0].artifacts);
    }
}

#[test]
fn shared_features_match_single_cell_runs() {
    let c = small_cohort(&tiny_scenario());
    let tasks = [Task::Mortality, Task::LongLos];
    let families = [ModelFamily::Lr, ModelFamily::Rf];
    let grid = eval_representation(&c, Representation::Aggregate, RegimeKind::PriorYear, &tasks, &families, &quick()).unwrap();
    assert_eq!(grid.len(), 4);
    let single = eval_temporal(&c, Task::LongLos, Representation::Aggregate, ModelFamily::Rf, RegimeKind::PriorYear, &quick()).unwrap();
    assert_eq!(grid[3], single);
}

proptest! {
    #[test]
    fn prior_year_training_is_nested_in_full_history(
        years in prop::collection::vec(2001i32..2010, 5..60),
        test_year in 2002i32..2010,
    ) {
        let stays: Vec<StayMeta> = years.iter().enumerate().map(|(i, &y)| stay(i as u32, y)).collect();
        if let Ok((prior, test)) = split_regime(&stays, RegimeKind::PriorYear, test_year) {
            let (full, test_full) = split_regime(&stays, RegimeKind::FullHistory, test_year).unwrap();
            prop_assert!(prior.iter().all(|i| full.contains(i)));
            prop_assert_eq!(&test, &test_full);
            prop_assert!(full.iter().all(|i| !test.contains(i)));
        }
    }
}
