//! Temporal evaluation: training regimes, per-year AUROC with bootstrap
//! standard errors, max-drop summaries, year-agnostic 5×2 cross-validation and
//! subgroup breakdowns.
//!
//! Each split refits every statistic (normalizer, item statistics, PCA) and
//! runs hyperparameter search on its training side only. Evaluation cells are
//! independent and are merged in a fixed order, so results do not depend on
//! the number of worker threads.

mod metrics;
mod pipeline;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::StayMeta;
use crate::models::{random_search, stratified_folds, FlatDataset, ModelFamily, SearchSpec};
use crate::par::par_map;
use crate::rng::{derive_seed, hash_str};
use crate::{Error, Result};

pub use metrics::{auroc, auroc_stderr, max_drop, mean_std};
pub use pipeline::{
    feature_columns, fit_representation, flatten, PreparedCohort, RepArtifacts, Representation,
    Task,
};
pub use report::{
    parse_metrics, read_metrics, summarize, write_metrics, write_summary, CellKey, EvalReport,
    FoldResult, MetricsRow, Skip, SubgroupResult, SummaryRow, YearResult, METRICS_HEADER,
    STDERR_METHOD, SUMMARY_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegimeKind {
    /// Shuffled cross-validation ignoring admission year.
    YearAgnostic,
    /// Train once on `first_year..=last_year`.
    FixedWindow { first_year: i32, last_year: i32 },
    PriorYear,
    FullHistory,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeKind::YearAgnostic => f.write_str("year_agnostic"),
            RegimeKind::FixedWindow { first_year, last_year } => {
                write!(f, "fixed_window:{first_year}-{last_year}")
            }
            RegimeKind::PriorYear => f.write_str("prior_year"),
            RegimeKind::FullHistory => f.write_str("full_history"),
        }
    }
}

impl FromStr for RegimeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown regime `{s}` (expected year_agnostic, prior_year, full_history or fixed_window:FIRST-LAST)"
            ))
        };
        match s {
            "year_agnostic" => Ok(RegimeKind::YearAgnostic),
            "prior_year" => Ok(RegimeKind::PriorYear),
            "full_history" => Ok(RegimeKind::FullHistory),
            _ => {
                let window = s.strip_prefix("fixed_window:").ok_or_else(bad)?;
                let (a, b) = window.split_once('-').ok_or_else(bad)?;
                let first_year = a.trim().parse().map_err(|_| bad())?;
                let last_year = b.trim().parse().map_err(|_| bad())?;
                if first_year > last_year {
                    return Err(Error::Config(format!("fixed window `{s}` ends before it starts")));
                }
                Ok(RegimeKind::FixedWindow { first_year, last_year })
            }
        }
    }
}

impl TryFrom<String> for RegimeKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RegimeKind> for String {
    fn from(r: RegimeKind) -> String {
        r.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegimeSpec {
    pub kind: RegimeKind,
    /// Defaults to two years after the first year present.
    pub first_test_year: Option<i32>,
}

impl RegimeSpec {
    pub fn new(kind: RegimeKind) -> Self {
        Self {
            kind,
            first_test_year: None,
        }
    }

    /// Test years from the first test year through `range.1`.
    pub fn test_years(&self, range: (i32, i32)) -> Result<Vec<i32>> {
        let start = self.first_test_year.unwrap_or(range.0 + 2);
        if let RegimeKind::FixedWindow { last_year, .. } = self.kind {
            if last_year >= start {
                return Err(Error::Config(format!(
                    "regime {} overlaps the first test year {start}",
                    self.kind
                )));
            }
        }
        Ok((start..=range.1).collect())
    }
}

/// Partitions stay positions into training and test sets for `test_year`.
pub fn split_regime(
    stays: &[StayMeta],
    kind: RegimeKind,
    test_year: i32,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let in_train = |y: i32| match kind {
        RegimeKind::FixedWindow { first_year, last_year } => (first_year..=last_year).contains(&y),
        RegimeKind::PriorYear => y == test_year - 1,
        RegimeKind::FullHistory => y < test_year,
        RegimeKind::YearAgnostic => false,
    };
    if kind == RegimeKind::YearAgnostic {
        return Err(Error::Config("year-agnostic splits come from cross-validation".into()));
    }
    let train: Vec<usize> = (0..stays.len()).filter(|&i| in_train(stays[i].admit_year)).collect();
    let test: Vec<usize> = (0..stays.len()).filter(|&i| stays[i].admit_year == test_year).collect();
    if train.is_empty() {
        return Err(Error::EmptySplit { side: "train", year: test_year });
    }
    if test.is_empty() {
        return Err(Error::EmptySplit { side: "test", year: test_year });
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    Ethnicity,
    Insurance,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Ethnicity => "ethnicity",
            Attribute::Insurance => "insurance",
        }
    }

    pub fn value(self, stay: &StayMeta) -> &str {
        match self {
            Attribute::Gender => &stay.gender,
            Attribute::Ethnicity => &stay.ethnicity,
            Attribute::Insurance => &stay.insurance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Search budget; its `seed` is replaced by a per-cell derived seed.
    pub search: SearchSpec,
    pub n_boot: usize,
    pub seed: u64,
    pub first_test_year: Option<i32>,
    pub subgroups: Vec<Attribute>,
    /// Test groups smaller than this are flagged instead of scored.
    pub subgroup_floor: usize,
    pub agnostic_repeats: usize,
    pub agnostic_folds: usize,
    /// Keep serialized normalizer, PCA and model text in each report.
    pub keep_artifacts: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            search: SearchSpec::default(),
            n_boot: 200,
            seed: 0,
            first_test_year: None,
            subgroups: Vec::new(),
            subgroup_floor: 30,
            agnostic_repeats: 5,
            agnostic_folds: 2,
            keep_artifacts: false,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.agnostic_repeats == 0 || self.agnostic_folds < 2 {
            return Err(Error::Config("year-agnostic evaluation needs >= 1 repeat and >= 2 folds".into()));
        }
        Ok(())
    }
}

/// Where a model is scored: a calendar year or a cross-validation fold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TestKey {
    Year(i32),
    Fold { repeat: usize, fold: usize },
}

impl TestKey {
    fn seed_path(self) -> u64 {
        match self {
            TestKey::Year(y) => y as u64,
            TestKey::Fold { repeat, fold } => (1 << 32) | ((repeat as u64) << 16) | fold as u64,
        }
    }

    fn year(self) -> Option<i32> {
        match self {
            TestKey::Year(y) => Some(y),
            TestKey::Fold { .. } => None,
        }
    }
}

/// One training split scored on one or more test sets.
struct FitGroup {
    label: String,
    tasks: Vec<Task>,
    train: Vec<usize>,
    tests: Vec<(TestKey, Vec<usize>)>,
}

enum Outcome {
    Scored {
        key: TestKey,
        auroc: f64,
        stderr: f64,
        n_train: usize,
        n_test: usize,
        subgroups: Vec<SubgroupResult>,
    },
    Skipped(Option<i32>, String),
}

struct CellPart {
    task: Task,
    family: ModelFamily,
    outcomes: Vec<Outcome>,
    artifacts: Vec<(String, String)>,
}

fn cell_seed(seed: u64, task: Task, rep: Representation, family: ModelFamily, regime: &str, group: &str) -> u64 {
    derive_seed(
        seed,
        &[
            hash_str(task.as_str()),
            hash_str(rep.as_str()),
            hash_str(family.as_str()),
            hash_str(regime),
            hash_str(group),
        ],
    )
}

fn skip_all(group: &FitGroup, families: &[ModelFamily], reason: &str) -> Vec<CellPart> {
    let mut parts = Vec::new();
    for &task in &group.tasks {
        for &family in families {
            parts.push(CellPart {
                task,
                family,
                outcomes: group
                    .tests
                    .iter()
                    .map(|(k, _)| Outcome::Skipped(k.year(), reason.to_string()))
                    .collect(),
                artifacts: Vec::new(),
            });
        }
    }
    parts
}

/// Test-set predictions of one year, aligned by position.
#[derive(Clone, Debug)]
pub struct SubgroupInputs<'a> {
    pub stays: Vec<&'a StayMeta>,
    pub scores: &'a [f64],
    pub labels: &'a [bool],
    pub test_year: i32,
    pub n_train: usize,
}

/// Per-value AUROC and bootstrap stderr of the globally trained model. Groups
/// below `floor` stays or with a single class are returned without a metric.
pub fn eval_subgroups(
    inputs: &SubgroupInputs<'_>,
    attribute: Attribute,
    floor: usize,
    n_boot: usize,
    seed: u64,
) -> Vec<SubgroupResult> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, stay) in inputs.stays.iter().enumerate() {
        groups.entry(attribute.value(stay)).or_default().push(j);
    }
    groups
        .into_iter()
        .map(|(value, members)| {
            let s: Vec<f64> = members.iter().map(|&j| inputs.scores[j]).collect();
            let y: Vec<bool> = members.iter().map(|&j| inputs.labels[j]).collect();
            let path = [inputs.test_year as u64, hash_str(attribute.as_str()), hash_str(value)];
            let metric = if members.len() < floor {
                None
            } else {
                auroc(&s, &y)
                    .and_then(|a| Ok((a, auroc_stderr(&s, &y, n_boot, derive_seed(seed, &path))?)))
                    .ok()
            };
            SubgroupResult {
                test_year: inputs.test_year,
                attribute,
                value: value.to_string(),
                n_train: inputs.n_train,
                n_test: members.len(),
                metric,
            }
        })
        .collect()
}

fn run_group(
    cohort: &PreparedCohort,
    rep: Representation,
    regime: &str,
    group: &FitGroup,
    families: &[ModelFamily],
    opts: &EvalOptions,
) -> Vec<CellPart> {
    let art = match fit_representation(cohort, rep, &group.train) {
        Ok(a) => a,
        Err(e) => return skip_all(group, families, &format!("representation fit failed: {e}")),
    };
    let Some(&first_task) = group.tasks.first() else {
        return Vec::new();
    };
    let flat = |idx: &[usize]| flatten(cohort, &art, idx, first_task);
    let (mut train, mut tests) = match flat(&group.train).and_then(|t| {
        let tests = group
            .tests
            .iter()
            .map(|(_, idx)| flat(idx))
            .collect::<Result<Vec<FlatDataset>>>()?;
        Ok((t, tests))
    }) {
        Ok(v) => v,
        Err(e) => return skip_all(group, families, &format!("feature extraction failed: {e}")),
    };
    let art_text = opts.keep_artifacts.then(|| art.to_text());
    let n_train = group.train.len();
    let all_rows = train.all_rows();
    let mut parts = Vec::new();
    for &task in &group.tasks {
        train.labels = group.train.iter().map(|&i| task.label(&cohort.stays[i])).collect();
        for (ds, (_, idx)) in tests.iter_mut().zip(&group.tests) {
            ds.labels = idx.iter().map(|&i| task.label(&cohort.stays[i])).collect();
        }
        for &family in families {
            let seed = cell_seed(opts.seed, task, rep, family, regime, &group.label);
            let spec = SearchSpec {
                seed,
                ..opts.search.clone()
            };
            let mut part = CellPart {
                task,
                family,
                outcomes: Vec::new(),
                artifacts: Vec::new(),
            };
            let result = match random_search(&train, &all_rows, &spec, family) {
                Ok(r) => r,
                Err(e) => {
                    part.outcomes = group
                        .tests
                        .iter()
                        .map(|(k, _)| Outcome::Skipped(k.year(), format!("training failed: {e}")))
                        .collect();
                    parts.push(part);
                    continue;
                }
            };
            if let Some(text) = &art_text {
                part.artifacts.push((format!("{}.representation.txt", group.label), text.clone()));
                part.artifacts.push((format!("{}.model.txt", group.label), result.model.to_text()));
            }
            for (ds, (key, idx)) in tests.iter().zip(&group.tests) {
                let scored = result.model.predict_proba(ds).and_then(|scores| {
                    let a = auroc(&scores, &ds.labels)?;
                    let e = auroc_stderr(&scores, &ds.labels, opts.n_boot, derive_seed(seed, &[key.seed_path()]))?;
                    Ok((scores, a, e))
                });
                part.outcomes.push(match scored {
                    Ok((scores, a, e)) => Outcome::Scored {
                        key: *key,
                        auroc: a,
                        stderr: e,
                        n_train,
                        n_test: idx.len(),
                        subgroups: match key {
                            TestKey::Year(test_year) => {
                                let inputs = SubgroupInputs {
                                    stays: idx.iter().map(|&i| &cohort.stays[i]).collect(),
                                    scores: &scores,
                                    labels: &ds.labels,
                                    test_year: *test_year,
                                    n_train,
                                };
                                opts.subgroups
                                    .iter()
                                    .flat_map(|&a| eval_subgroups(&inputs, a, opts.subgroup_floor, opts.n_boot, seed))
                                    .collect()
                            }
                            TestKey::Fold { .. } => Vec::new(),
                        },
                    },
                    Err(e) => Outcome::Skipped(key.year(), format!("scoring failed: {e}")),
                });
            }
            parts.push(part);
        }
    }
    parts
}

fn assemble(
    rep: Representation,
    regime: &str,
    tasks: &[Task],
    families: &[ModelFamily],
    early: Vec<(Option<i32>, String)>,
    parts: Vec<Vec<CellPart>>,
) -> Vec<EvalReport> {
    let mut reports = Vec::new();
    for &task in tasks {
        for &family in families {
            let mut r = EvalReport::new(CellKey {
                task,
                representation: rep,
                model: family,
                regime: regime.to_string(),
            });
            for (year, reason) in &early {
                r.skipped.push(Skip {
                    test_year: *year,
                    reason: reason.clone(),
                });
            }
            for part in parts.iter().flatten().filter(|p| p.task == task && p.family == family) {
                r.artifacts.extend(part.artifacts.iter().cloned());
                for o in &part.outcomes {
                    match o {
                        Outcome::Scored {
                            key,
                            auroc,
                            stderr,
                            n_train,
                            n_test,
                            subgroups,
                        } => {
                            match *key {
                                TestKey::Year(test_year) => r.years.push(YearResult {
                                    test_year,
                                    auroc: *auroc,
                                    stderr: *stderr,
                                    n_train: *n_train,
                                    n_test: *n_test,
                                }),
                                TestKey::Fold { repeat, fold } => r.folds.push(FoldResult {
                                    repeat,
                                    fold,
                                    auroc: *auroc,
                                    stderr: *stderr,
                                    n_train: *n_train,
                                    n_test: *n_test,
                                }),
                            }
                            r.subgroups.extend(subgroups.iter().cloned());
                        }
                        Outcome::Skipped(year, reason) => r.skipped.push(Skip {
                            test_year: *year,
                            reason: reason.clone(),
                        }),
                    }
                }
            }
            r.years.sort_by_key(|y| y.test_year);
            r.skipped.sort_by_key(|s| s.test_year);
            reports.push(r);
        }
    }
    reports
}

/// Evaluates one representation under one regime for every task and model
/// family, sharing each split's features across them. Returns one report per
/// `(task, family)` in task-major order. Per-year failures become recorded
/// skips; only invalid options are errors.
pub fn eval_representation(
    cohort: &PreparedCohort,
    rep: Representation,
    regime: RegimeKind,
    tasks: &[Task],
    families: &[ModelFamily],
    opts: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    opts.validate()?;
    let regime_name = regime.to_string();
    let mut early = Vec::new();
    let mut groups = Vec::new();
    if regime == RegimeKind::YearAgnostic {
        let everyone: Vec<usize> = (0..cohort.len()).collect();
        for &task in tasks {
            let labels = cohort.labels(task);
            for repeat in 0..opts.agnostic_repeats {
                let seed = derive_seed(opts.seed, &[hash_str(&regime_name), hash_str(task.as_str()), repeat as u64]);
                let fold_of = match stratified_folds(&labels, &everyone, opts.agnostic_folds, seed) {
                    Ok(f) => f,
                    Err(e) => {
                        early.push((None, e.to_string()));
                        continue;
                    }
                };
                for fold in 0..opts.agnostic_folds {
                    let (test, train): (Vec<usize>, Vec<usize>) = everyone.iter().partition(|&&i| fold_of[i] == fold);
                    groups.push(FitGroup {
                        label: format!("r{}f{}", repeat + 1, fold + 1),
                        tasks: vec![task],
                        train,
                        tests: vec![(TestKey::Fold { repeat: repeat + 1, fold: fold + 1 }, test)],
                    });
                }
            }
        }
    } else {
        let spec = RegimeSpec {
            kind: regime,
            first_test_year: opts.first_test_year,
        };
        let mut window: Option<FitGroup> = None;
        for year in spec.test_years(cohort.year_range())? {
            match split_regime(&cohort.stays, regime, year) {
                Ok((train, test)) => match (&mut window, regime) {
                    (Some(w), RegimeKind::FixedWindow { .. }) => w.tests.push((TestKey::Year(year), test)),
                    (None, RegimeKind::FixedWindow { .. }) => {
                        window = Some(FitGroup {
                            label: "window".into(),
                            tasks: tasks.to_vec(),
                            train,
                            tests: vec![(TestKey::Year(year), test)],
                        })
                    }
                    _ => groups.push(FitGroup {
                        label: year.to_string(),
                        tasks: tasks.to_vec(),
                        train,
                        tests: vec![(TestKey::Year(year), test)],
                    }),
                },
                Err(e) => early.push((Some(year), e.to_string())),
            }
        }
        groups.extend(window);
    }
    let parts = par_map(&groups, |g| run_group(cohort, rep, &regime_name, g, families, opts));
    Ok(assemble(rep, &regime_name, tasks, families, early, parts))
}

/// Per-year evaluation of one cell under a temporal regime.
pub fn eval_temporal(
    cohort: &PreparedCohort,
    task: Task,
    rep: Representation,
    family: ModelFamily,
    regime: RegimeKind,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if regime == RegimeKind::YearAgnostic {
        return Err(Error::Config("eval_temporal needs a temporal regime".into()));
    }
    Ok(eval_representation(cohort, rep, regime, &[task], &[family], opts)?.remove(0))
}

/// Repeated stratified k-fold evaluation over all stays regardless of year.
pub fn eval_year_agnostic(
    cohort: &PreparedCohort,
    task: Task,
    rep: Representation,
    family: ModelFamily,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    Ok(eval_representation(cohort, rep, RegimeKind::YearAgnostic, &[task], &[family], opts)?.remove(0))
}

#[cfg(test)]
mod tests;
