use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_labels, train, FlatDataset, LrConfig, Model, ModelConfig, ModelFamily, Penalty, RfConfig,
};
use crate::evaluate::auroc;
use crate::rng::{derive_seed, substream};
use crate::{Error, Result};

const STREAM_FOLDS: u64 = 1;
const STREAM_DRAWS: u64 = 2;
const STREAM_TREES: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSpace {
    /// C is drawn log-uniformly from `[c_min, c_max]`.
    pub c_min: f64,
    pub c_max: f64,
    pub penalties: Vec<Penalty>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LrSpace {
    fn default() -> Self {
        Self {
            c_min: 1e-4,
            c_max: 1e2,
            penalties: vec![Penalty::L1, Penalty::L2],
            max_iter: 1000,
            tol: 1e-7,
        }
    }
}

/// Integer ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfSpace {
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    pub min_samples_split: (usize, usize),
    pub min_samples_leaf: (usize, usize),
    pub max_features: Option<f64>,
    pub max_bins: usize,
}

impl Default for RfSpace {
    fn default() -> Self {
        Self {
            n_estimators: (50, 300),
            max_depth: (3, 20),
            min_samples_split: (2, 20),
            min_samples_leaf: (1, 10),
            max_features: None,
            max_bins: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub n_draws: usize,
    pub cv_folds: usize,
    pub seed: u64,
    pub lr: LrSpace,
    pub rf: RfSpace,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            n_draws: 20,
            cv_folds: 5,
            seed: 0,
            lr: LrSpace::default(),
            rf: RfSpace::default(),
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_draws == 0 {
            return bad("search n_draws must be >= 1".into());
        }
        if self.cv_folds < 2 {
            return bad("search cv_folds must be >= 2".into());
        }
        let lr = &self.lr;
        if !(lr.c_min > 0.0 && lr.c_min <= lr.c_max && lr.c_max.is_finite()) {
            return bad(format!("search C range [{}, {}] is invalid", lr.c_min, lr.c_max));
        }
        if lr.penalties.is_empty() {
            return bad("search needs at least one penalty".into());
        }
        let rf = &self.rf;
        for (name, (lo, hi)) in [
            ("n_estimators", rf.n_estimators),
            ("max_depth", rf.max_depth),
            ("min_samples_split", rf.min_samples_split),
            ("min_samples_leaf", rf.min_samples_leaf),
        ] {
            if lo > hi || lo == 0 {
                return bad(format!("search range {name} = ({lo}, {hi}) is invalid"));
            }
        }
        if rf.min_samples_split.0 < 2 {
            return bad("search min_samples_split must start at 2 or more".into());
        }
        Ok(())
    }
}

/// The `n_draws` candidate configurations, in draw order.
pub fn draw_configs(spec: &SearchSpec, family: ModelFamily) -> Vec<ModelConfig> {
    let tag = match family {
        ModelFamily::Lr => 0,
        ModelFamily::Rf => 1,
    };
    let mut rng = substream(spec.seed, &[STREAM_DRAWS, tag]);
    (0..spec.n_draws)
        .map(|d| match family {
            ModelFamily::Lr => {
                let (lo, hi) = (spec.lr.c_min.ln(), spec.lr.c_max.ln());
                let c = if lo == hi { spec.lr.c_min } else { rng.random_range(lo..=hi).exp() };
                let penalty = spec.lr.penalties[rng.random_range(0..spec.lr.penalties.len())];
                ModelConfig::Lr(LrConfig {
                    c,
                    penalty,
                    max_iter: spec.lr.max_iter,
                    tol: spec.lr.tol,
                })
            }
            ModelFamily::Rf => {
                let s = &spec.rf;
                let mut pick = |(lo, hi): (usize, usize)| rng.random_range(lo..=hi);
                let n_estimators = pick(s.n_estimators);
                let max_depth = pick(s.max_depth);
                let min_samples_split = pick(s.min_samples_split);
                let min_samples_leaf = pick(s.min_samples_leaf);
                ModelConfig::Rf(RfConfig {
                    n_estimators,
                    max_depth,
                    min_samples_split,
                    min_samples_leaf,
                    max_features: s.max_features,
                    max_bins: s.max_bins,
                    bootstrap: true,
                    seed: derive_seed(spec.seed, &[STREAM_TREES, d as u64]),
                })
            }
        })
        .collect()
}

/// Fold id per position of `rows`. Positives and negatives are shuffled
/// separately and dealt round-robin, so every fold holds both classes.
pub fn stratified_folds(labels: &[bool], rows: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut pos: Vec<usize> = (0..rows.len()).filter(|&i| labels[rows[i]]).collect();
    let mut neg: Vec<usize> = (0..rows.len()).filter(|&i| !labels[rows[i]]).collect();
    if k < 2 {
        return Err(Error::Stratification {
            folds: k,
            reason: "need at least two folds".into(),
        });
    }
    if pos.len() < k || neg.len() < k {
        return Err(Error::Stratification {
            folds: k,
            reason: format!("{} positives and {} negatives", pos.len(), neg.len()),
        });
    }
    let mut rng = substream(seed, &[STREAM_FOLDS]);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0; rows.len()];
    for (j, &i) in pos.iter().enumerate() {
        fold[i] = j % k;
    }
    for (j, &i) in neg.iter().enumerate() {
        fold[i] = (k - 1) - j % k;
    }
    Ok(fold)
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub configs: Vec<ModelConfig>,
    /// Mean validation AUROC per draw.
    pub cv_scores: Vec<f64>,
    pub best: usize,
    pub model: Model,
}

impl SearchResult {
    pub fn best_config(&self) -> &ModelConfig {
        &self.configs[self.best]
    }
}

/// Draws configurations from `spec`, scores them by stratified
/// cross-validation on `rows`, and refits the best one on all of `rows`.
pub fn random_search(
    data: &FlatDataset,
    rows: &[usize],
    spec: &SearchSpec,
    family: ModelFamily,
) -> Result<SearchResult> {
    spec.validate()?;
    search_configs(data, rows, draw_configs(spec, family), spec.cv_folds, spec.seed)
}

/// Cross-validates an explicit candidate list. Ties go to the earliest draw.
pub fn search_configs(
    data: &FlatDataset,
    rows: &[usize],
    configs: Vec<ModelConfig>,
    folds: usize,
    seed: u64,
) -> Result<SearchResult> {
    check_labels(data, rows)?;
    if configs.is_empty() {
        return Err(Error::Config("search needs at least one candidate".into()));
    }
    let fold_of = stratified_folds(&data.labels, rows, folds, seed)?;
    let split = |f: usize| -> (Vec<usize>, Vec<usize>) {
        (0..rows.len()).partition(|&i| fold_of[i] != f)
    };
    let fit_local = |config: &ModelConfig, local: &[usize]| -> Result<Model> {
        let global: Vec<usize> = local.iter().map(|&i| rows[i]).collect();
        train(data, &global, config)
    };

    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|d| (0..folds).map(move |f| (d, f)))
        .collect();
    let eval = |&(d, f): &(usize, usize)| -> Result<f64> {
        let (train_local, valid_local) = split(f);
        let model = fit_local(&configs[d], &train_local)?;
        let valid: Vec<usize> = valid_local.iter().map(|&i| rows[i]).collect();
        let scores = model.predict_rows(data, &valid)?;
        let labels: Vec<bool> = valid.iter().map(|&i| data.labels[i]).collect();
        auroc(&scores, &labels)
    };
    #[cfg(feature = "parallel")]
    let fold_scores: Vec<Result<f64>> = {
        use rayon::prelude::*;
        cells.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fold_scores: Vec<Result<f64>> = cells.iter().map(eval).collect();

    let mut cv_scores = vec![0.0; configs.len()];
    for ((d, _), s) in cells.iter().zip(fold_scores) {
        cv_scores[*d] += s? / folds as f64;
    }
    let mut best = 0;
    for (d, s) in cv_scores.iter().enumerate() {
        if *s > cv_scores[best] {
            best = d;
        }
    }
    let all: Vec<usize> = (0..rows.len()).collect();
    let model = fit_local(&configs[best], &all)?;
    Ok(SearchResult {
        configs,
        cv_scores,
        best,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::{dataset, gaussian};

    #[test]
    fn folds_are_stratified_and_disjoint() {
        let d = gaussian(103, 1, 0.5, 1);
        let rows = d.all_rows();
        let f = stratified_folds(&d.labels, &rows, 5, 9).unwrap();
        for k in 0..5 {
            let members: Vec<usize> = (0..rows.len()).filter(|&i| f[i] == k).collect();
            let pos = members.iter().filter(|&&i| d.labels[i]).count();
            assert!(pos > 0 && pos < members.len());
            assert!(members.len() >= 103 / 5);
        }
        assert_eq!(f, stratified_folds(&d.labels, &rows, 5, 9).unwrap());
    }

    #[test]
    fn too_few_positives_is_a_stratification_error() {
        let rows: Vec<(Vec<f32>, bool)> = (0..20).map(|i| (vec![i as f32], i < 2)).collect();
        let d = dataset(&["x"], &rows);
        assert!(matches!(
            random_search(&d, &d.all_rows(), &SearchSpec::default(), ModelFamily::Lr),
            Err(Error::Stratification { folds: 5, .. })
        ));
    }

    #[test]
    fn single_draw_is_refit_on_everything() {
        let d = gaussian(80, 3, 0.7, 2);
        let spec = SearchSpec {
            n_draws: 1,
            cv_folds: 2,
            seed: 4,
            ..SearchSpec::default()
        };
        for family in [ModelFamily::Lr, ModelFamily::Rf] {
            let res = random_search(&d, &d.all_rows(), &spec, family).unwrap();
            assert_eq!(res.best, 0);
            let direct = train(&d, &d.all_rows(), &res.configs[0]).unwrap();
            assert_eq!(res.model.to_text(), direct.to_text());
        }
    }

    #[test]
    fn absurd_regularization_loses() {
        let rows: Vec<(Vec<f32>, bool)> = (0..60)
            .map(|i| (vec![i as f32 / 10.0, ((i * 7) % 11) as f32], i >= 30))
            .collect();
        let d = dataset(&["x", "noise"], &rows);
        let cfg = |c: f64| {
            ModelConfig::Lr(LrConfig {
                c,
                penalty: Penalty::L1,
                ..LrConfig::default()
            })
        };
        let res = search_configs(&d, &d.all_rows(), vec![cfg(1e-8), cfg(10.0), cfg(1e-8)], 3, 1).unwrap();
        assert_eq!(res.best, 1);
        assert_eq!(res.cv_scores[0], 0.5);
    }

    #[test]
    fn selection_matches_exhaustive_fold_fits() {
        let d = gaussian(60, 4, 0.4, 3);
        let rows: Vec<usize> = (5..60).collect();
        for family in [ModelFamily::Lr, ModelFamily::Rf] {
            let spec = SearchSpec {
                n_draws: 3,
                cv_folds: 2,
                seed: 17,
                rf: RfSpace {
                    n_estimators: (3, 8),
                    ..RfSpace::default()
                },
                ..SearchSpec::default()
            };
            let res = random_search(&d, &rows, &spec, family).unwrap();
            let folds = stratified_folds(&d.labels, &rows, 2, 17).unwrap();
            let mut means = Vec::new();
            for config in &res.configs {
                let mut total = 0.0;
                for f in 0..2 {
                    let train_rows: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] != f).map(|i| rows[i]).collect();
                    let valid: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] == f).map(|i| rows[i]).collect();
                    let m = train(&d, &train_rows, config).unwrap();
                    let s = m.predict_rows(&d, &valid).unwrap();
                    let y: Vec<bool> = valid.iter().map(|&i| d.labels[i]).collect();
                    total += auroc(&s, &y).unwrap() / 2.0;
                }
                means.push(total);
            }
            assert_eq!(means, res.cv_scores, "{family}");
            let best = (0..3).fold(0, |b, i| if means[i] > means[b] { i } else { b });
            assert_eq!(res.best, best);
            assert!(res.configs.contains(res.best_config()));
        }
    }

    #[test]
    fn draws_respect_ranges() {
        let spec = SearchSpec {
            n_draws: 200,
            ..SearchSpec::default()
        };
        for c in draw_configs(&spec, ModelFamily::Lr) {
            let ModelConfig::Lr(c) = c else { panic!() };
            assert!((1e-4 * (1.0 - 1e-12)..=1e2 * (1.0 + 1e-12)).contains(&c.c));
        }
        for c in draw_configs(&spec, ModelFamily::Rf) {
            let ModelConfig::Rf(c) = c else { panic!() };
            assert!((50..=300).contains(&c.n_estimators));
            assert!((3..=20).contains(&c.max_depth));
        }
        assert_eq!(draw_configs(&spec, ModelFamily::Rf), draw_configs(&spec, ModelFamily::Rf));
    }
}
