//! Config-driven orchestration behind the `yearshift` binary.
//!
//! A run is described by one TOML file ([`RunConfig`]). Unknown keys are
//! rejected. `generate` writes the synthetic dataset, `run` evaluates the full
//! task × representation × model × regime grid into `metrics.csv` and
//! `summary.csv`, and `report` renders SVG figures and text tables from
//! `metrics.csv`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | command-line usage error |
//! | 3 | invalid configuration |
//! | 4 | file system error |
//! | 5 | malformed input data or artifact |
//! | 6 | evaluation failure |

#[cfg(feature = "cli")]
mod args;
mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{load_agg_map, load_dataset, load_ontology, CohortCriteria, Dataset, DatasetPaths};
use crate::datagen::{emit_dataset, generate, DriftScenario};
use crate::evaluate::{
    eval_representation, summarize, write_metrics, write_summary, Attribute, EvalOptions,
    EvalReport, MetricsRow, PreparedCohort, RegimeKind, Representation, Task,
};
use crate::models::{ModelFamily, SearchSpec};
use crate::par::par_map;
use crate::represent::{build_concept_span, missingness, AggregationMap, MiniOntology, Normalizer};
use crate::{Error, Result};

#[cfg(feature = "cli")]
pub use args::{main, run_cli, Cli};
pub use svg::{format_drop, render_task_svg, render_tables};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_DATA: u8 = 5;
pub const EXIT_EVAL: u8 = 6;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Schema { .. } | Error::UnknownItem { .. } | Error::Artifact(_) => EXIT_DATA,
        Error::DegenerateLabels
        | Error::UndefinedMetric
        | Error::DimensionMismatch { .. }
        | Error::Stratification { .. }
        | Error::EmptySplit { .. } => EXIT_EVAL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_boot: usize,
    pub first_test_year: Option<i32>,
    pub subgroups: Vec<Attribute>,
    pub subgroup_floor: usize,
    pub agnostic_repeats: usize,
    pub agnostic_folds: usize,
    /// Write every serialized normalizer, PCA and model under `artifacts/`.
    pub save_artifacts: bool,
    /// Components per hour for PCA; defaults to the number of aggregation groups.
    pub pca_k: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let e = EvalOptions::default();
        Self {
            n_boot: e.n_boot,
            first_test_year: e.first_test_year,
            subgroups: e.subgroups,
            subgroup_floor: e.subgroup_floor,
            agnostic_repeats: e.agnostic_repeats,
            agnostic_folds: e.agnostic_folds,
            save_artifacts: false,
            pca_k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Also seeds the synthetic scenario; falls back to
    /// `scenario.seed` when absent.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Read an existing dataset from this directory instead of generating one.
    pub data_dir: Option<PathBuf>,
    pub scenario: DriftScenario,
    /// Year of the record-system switch shaded in figures. Defaults to the
    /// scenario's switch year when no external data directory is used.
    pub switch_year: Option<i32>,
    pub cohort: CohortCriteria,
    pub tasks: Vec<Task>,
    pub representations: Vec<Representation>,
    pub models: Vec<ModelFamily>,
    pub regimes: Vec<RegimeKind>,
    pub search: SearchSpec,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("out"),
            data_dir: None,
            scenario: DriftScenario::default(),
            switch_year: None,
            cohort: CohortCriteria::default(),
            tasks: vec![Task::Mortality, Task::LongLos],
            representations: vec![
                Representation::Raw,
                Representation::Pca,
                Representation::ConceptSpan,
                Representation::Aggregate,
            ],
            models: vec![ModelFamily::Lr, ModelFamily::Rf],
            regimes: vec![
                RegimeKind::YearAgnostic,
                RegimeKind::FixedWindow {
                    first_year: 2001,
                    last_year: 2002,
                },
                RegimeKind::PriorYear,
                RegimeKind::FullHistory,
            ],
            search: SearchSpec::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML text and validates it. Paths stay relative to the caller.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        if let Some(d) = &cfg.data_dir {
            if d.is_relative() {
                cfg.data_dir = Some(base.join(d));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("`{what}` must not be empty")));
        if self.tasks.is_empty() {
            return empty("tasks");
        }
        if self.representations.is_empty() {
            return empty("representations");
        }
        if self.models.is_empty() {
            return empty("models");
        }
        if self.regimes.is_empty() {
            return empty("regimes");
        }
        self.scenario.validate()?;
        self.cohort.validate()?;
        self.eval_options().validate()?;
        if let Some(dir) = &self.data_dir {
            for p in dataset_files(dir) {
                if !p.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(self.scenario.seed)
    }

    /// The scenario actually generated: the configured one under the master seed.
    pub fn effective_scenario(&self) -> DriftScenario {
        DriftScenario {
            seed: self.master_seed(),
            ..self.scenario.clone()
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        let e = &self.evaluation;
        EvalOptions {
            search: self.search.clone(),
            n_boot: e.n_boot,
            seed: self.master_seed(),
            first_test_year: e.first_test_year,
            subgroups: e.subgroups.clone(),
            subgroup_floor: e.subgroup_floor,
            agnostic_repeats: e.agnostic_repeats,
            agnostic_folds: e.agnostic_folds,
            keep_artifacts: e.save_artifacts,
        }
    }

    /// Where `generate` writes and `run` reads the dataset.
    pub fn dataset_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out_dir.join("data"))
    }

    pub fn report_switch_year(&self) -> Option<i32> {
        self.switch_year
            .or_else(|| self.data_dir.is_none().then_some(self.scenario.switch_year))
    }
}

fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    let p = DatasetPaths::in_dir(dir);
    vec![p.events, p.stays, p.items, p.agg_map, p.ontology]
}

/// Stay counts, label prevalence and per-representation missingness.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    /// All stays in the data, before cohort selection.
    pub stays_per_year: BTreeMap<i32, usize>,
    pub cohort_size: usize,
    pub mortality_prevalence: f64,
    pub long_los_prevalence: f64,
    /// Fraction of absent hour × feature cells over the selected cohort.
    pub missingness: Vec<(Representation, f64)>,
}

impl DatasetSummary {
    pub fn new(dataset: &Dataset, cohort: &PreparedCohort) -> Self {
        let mut stays_per_year = BTreeMap::new();
        for s in &dataset.stays {
            *stays_per_year.entry(s.admit_year).or_insert(0) += 1;
        }
        let n = cohort.len().max(1) as f64;
        let prevalence = |t: Task| cohort.labels(t).iter().filter(|&&y| y).count() as f64 / n;
        let all: Vec<usize> = (0..cohort.len()).collect();
        let raw = || all.iter().map(|&i| cohort.raw_tensor(i));
        let stats = Normalizer::fit(raw());
        let spans = par_map(&all, |&i| build_concept_span(cohort.raw_tensor(i), cohort.concept_mapping(), &stats));
        Self {
            stays_per_year,
            cohort_size: cohort.len(),
            mortality_prevalence: prevalence(Task::Mortality),
            long_los_prevalence: prevalence(Task::LongLos),
            missingness: vec![
                (Representation::Raw, missingness(raw())),
                (Representation::Aggregate, missingness(all.iter().map(|&i| cohort.aggregate_tensor(i)))),
                (Representation::ConceptSpan, missingness(&spans)),
            ],
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stays per year:")?;
        for (y, n) in &self.stays_per_year {
            writeln!(f, "  {y}  {n}")?;
        }
        writeln!(f, "cohort size: {}", self.cohort_size)?;
        writeln!(f, "mortality prevalence: {:.2}%", 100.0 * self.mortality_prevalence)?;
        writeln!(f, "long-LOS prevalence: {:.2}%", 100.0 * self.long_los_prevalence)?;
        writeln!(f, "missingness:")?;
        for (rep, m) in &self.missingness {
            writeln!(f, "  {:<13} {:.2}%", rep.as_str(), 100.0 * m)?;
        }
        Ok(())
    }
}

/// Dataset, aggregation map and ontology as read from a data directory.
pub struct LoadedData {
    pub dataset: Dataset,
    pub agg_map: AggregationMap,
    pub ontology: MiniOntology,
}

pub fn load_data(dir: &Path) -> Result<LoadedData> {
    for p in dataset_files(dir) {
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file missing; run `generate` first"),
            ));
        }
    }
    let paths = DatasetPaths::in_dir(dir);
    Ok(LoadedData {
        dataset: load_dataset(&paths)?,
        agg_map: load_agg_map(&paths.agg_map)?,
        ontology: load_ontology(&paths.ontology)?,
    })
}

pub fn prepare(cfg: &RunConfig, data: &LoadedData) -> Result<PreparedCohort> {
    PreparedCohort::new(
        &data.dataset,
        &data.agg_map,
        &data.ontology,
        &cfg.cohort,
        cfg.evaluation.pca_k,
    )
}

/// Generates the configured scenario into the dataset directory and returns
/// its summary.
pub fn cmd_generate(cfg: &RunConfig) -> Result<DatasetSummary> {
    if cfg.data_dir.is_some() {
        return Err(Error::Config("`generate` writes synthetic data; remove `data_dir`".into()));
    }
    let g = generate(&cfg.effective_scenario())?;
    let dir = cfg.dataset_dir();
    emit_dataset(&g.events, &g.stays, &g.items, &g.agg_map, &g.ontology, &dir)?;
    let data = LoadedData {
        dataset: Dataset {
            events: g.events,
            stays: g.stays,
            items: g.items,
        },
        agg_map: g.agg_map,
        ontology: g.ontology,
    };
    let cohort = prepare(cfg, &data)?;
    Ok(DatasetSummary::new(&data.dataset, &cohort))
}

/// Outputs of one `run`.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<EvalReport>,
    pub metrics: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Evaluates every grid cell and writes `metrics.csv` and `summary.csv`.
/// Cell failures are recorded in the files; only configuration, I/O and data
/// errors abort. `progress` receives one line per finished
/// representation × regime block.
pub fn cmd_run(cfg: &RunConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<RunOutput> {
    let data = load_data(&cfg.dataset_dir())?;
    let cohort = prepare(cfg, &data)?;
    let opts = cfg.eval_options();
    let blocks: Vec<(Representation, RegimeKind)> = cfg
        .representations
        .iter()
        .flat_map(|&r| cfg.regimes.iter().map(move |&g| (r, g)))
        .collect();
    let results = par_map(&blocks, |&(rep, regime)| {
        let out = eval_representation(&cohort, rep, regime, &cfg.tasks, &cfg.models, &opts);
        progress(&format!("finished {rep} / {regime}"));
        out
    });
    let mut reports = Vec::new();
    for r in results {
        reports.extend(r?);
    }
    reports.sort_by(|a, b| a.key.cmp(&b.key));

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let metrics: Vec<MetricsRow> = reports.iter().flat_map(EvalReport::metric_rows).collect();
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let summary_path = cfg.out_dir.join("summary.csv");
    write_metrics(&metrics_path, &metrics)?;
    write_summary(&summary_path, &summarize(&metrics))?;
    if cfg.evaluation.save_artifacts {
        write_artifacts(&cfg.out_dir.join("artifacts"), &reports)?;
    }
    Ok(RunOutput {
        reports,
        metrics,
        metrics_path,
        summary_path,
    })
}

fn write_artifacts(root: &Path, reports: &[EvalReport]) -> Result<()> {
    for r in reports {
        let dir = root
            .join(r.key.task.as_str())
            .join(r.key.representation.as_str())
            .join(r.key.model.as_str())
            .join(r.key.regime.replace(':', "_"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, text) in &r.artifacts {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// Files written by `report`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutput {
    pub figures: Vec<PathBuf>,
    pub tables: PathBuf,
}

/// Renders one SVG per task plus a text table file from a metrics file.
pub fn cmd_report(metrics_path: &Path, out_dir: &Path, switch_year: Option<i32>) -> Result<ReportOutput> {
    let rows = crate::evaluate::read_metrics(metrics_path)?;
    let dir = out_dir.join("report");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tasks: Vec<&str> = rows.iter().map(|r| r.task.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let mut figures = Vec::new();
    for task in tasks {
        let p = dir.join(format!("{task}.svg"));
        fs::write(&p, render_task_svg(&rows, task, switch_year)).map_err(|e| Error::io(&p, e))?;
        figures.push(p);
    }
    let tables = dir.join("tables.md");
    fs::write(&tables, render_tables(&summarize(&rows))).map_err(|e| Error::io(&tables, e))?;
    Ok(ReportOutput { figures, tables })
}
