//! Temporal dataset-shift evaluation for hourly clinical time-series pipelines.
//!
//! The crate simulates ICU cohorts whose measurement vocabulary changes abruptly
//! at a record-system switch, buckets the first day of each stay into an hourly
//! grid, builds four feature representations (raw item ids, PCA, ontology concept
//! spans and expert aggregates), and measures how logistic regression and random
//! forests trained on historical years hold up on later years.
//!
//! Module map:
//!
//! * [`datagen`] synthetic cohorts with configurable drift and delimited-text output
//! * [`cohort`] loading, cohort selection, hourly bucketing and demographics
//! * [`represent`] representations, normalization, simple imputation and PCA
//! * [`models`] logistic regression, random forest and random-search tuning
//! * [`evaluate`] AUROC, training regimes, per-year reports and subgroup analysis
//! * [`cli`] config-driven orchestration used by the `yearshift` binary

pub mod cli;
pub mod cohort;
pub mod datagen;
mod error;
pub mod evaluate;
pub mod models;
mod par;
pub mod represent;
pub mod rng;

pub use error::{Error, Result};
