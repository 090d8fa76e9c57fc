use rand::Rng;

use crate::rng::substream;
use crate::{Error, Result};

/// Area under the ROC curve as the Mann–Whitney statistic, with average ranks
/// for tied scores. Errors unless both classes are present.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps tie averages integral
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average (i + 1 + j) / 2
        let avg2 = (i + 1 + j) as u64;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        rank2_pos += avg2 * pos_in_group;
        i = j;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let u2 = rank2_pos - np * (np + 1);
    Ok(u2 as f64 / 2.0 / (np * nn) as f64)
}

/// Standard deviation of AUROC over `n_boot` stratified bootstrap resamples:
/// positives and negatives are each resampled with replacement to their own
/// counts. The population form is used, so `n_boot = 1` gives 0.
pub fn auroc_stderr(scores: &[f64], labels: &[bool], n_boot: usize, seed: u64) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| !y).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    if n_boot == 0 {
        return Ok(0.0);
    }
    let mut rng = substream(seed, &[]);
    let mut s = Vec::with_capacity(scores.len());
    let mut y = Vec::with_capacity(scores.len());
    let mut values = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        s.clear();
        y.clear();
        for _ in 0..pos.len() {
            s.push(pos[rng.random_range(0..pos.len())]);
            y.push(true);
        }
        for _ in 0..neg.len() {
            s.push(neg[rng.random_range(0..neg.len())]);
            y.push(false);
        }
        values.push(auroc(&s, &y)?);
    }
    let mean = values.iter().sum::<f64>() / n_boot as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_boot as f64;
    Ok(var.sqrt())
}

/// `auroc(first) - min(later)`. Negative when every later year beats the
/// first one. `None` with fewer than two values.
pub fn max_drop(series: &[f64]) -> Option<f64> {
    let (first, rest) = series.split_first()?;
    let worst = rest.iter().copied().reduce(f64::min)?;
    Some(first - worst)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (0..scores.len()).filter(|&i| labels[i]) {
            for j in (0..scores.len()).filter(|&j| !labels[j]) {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric)));
    }

    #[test]
    fn fifty_point_fixture_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let scores: Vec<f64> = (0..50).map(|_| (rng.random_range(0..12) as f64) / 4.0).collect();
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
    }

    /// Second bootstrap implementation: same draws, pair-counting AUROC.
    fn stderr_reference(scores: &[f64], labels: &[bool], n_boot: usize, seed: u64) -> f64 {
        let pos: Vec<f64> = (0..scores.len()).filter(|&i| labels[i]).map(|i| scores[i]).collect();
        let neg: Vec<f64> = (0..scores.len()).filter(|&i| !labels[i]).map(|i| scores[i]).collect();
        let mut rng = substream(seed, &[]);
        let mut aucs = Vec::new();
        for _ in 0..n_boot {
            let p: Vec<f64> = (0..pos.len()).map(|_| pos[rng.random_range(0..pos.len())]).collect();
            let q: Vec<f64> = (0..neg.len()).map(|_| neg[rng.random_range(0..neg.len())]).collect();
            let s: Vec<f64> = p.iter().chain(&q).copied().collect();
            let y: Vec<bool> = p.iter().map(|_| true).chain(q.iter().map(|_| false)).collect();
            aucs.push(pair_count(&s, &y));
        }
        let m = aucs.iter().sum::<f64>() / n_boot as f64;
        (aucs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n_boot as f64).sqrt()
    }

    #[test]
    fn stderr_matches_reference_on_forty_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let scores: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.random_bool(0.3 + 0.4 * s)).collect();
        let got = auroc_stderr(&scores, &labels, 200, 7).unwrap();
        assert_eq!(got, stderr_reference(&scores, &labels, 200, 7));
        assert!(got > 0.0);
    }

    #[test]
    fn stderr_edge_cases() {
        let scores: Vec<f64> = (0..400).map(f64::from).collect();
        let labels: Vec<bool> = (0..400).map(|i| i >= 200).collect();
        assert!(auroc_stderr(&scores, &labels, 200, 1).unwrap() < 0.01);
        let labels: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        assert_eq!(auroc_stderr(&scores, &labels, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn max_drop_follows_definition() {
        assert_eq!(max_drop(&[0.8, 0.7, 0.75]), Some(0.8 - 0.7));
        assert!(max_drop(&[0.6, 0.7, 0.8]).unwrap() < 0.0);
        assert_eq!(max_drop(&[0.6]), None);
    }

    proptest! {
        #[test]
        fn rank_statistic_equals_pair_count(
            pts in prop::collection::vec((0u8..20, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = pts.iter().map(|p| f64::from(p.0) / 7.0).collect();
            let labels: Vec<bool> = pts.iter().map(|p| p.1).collect();
            match auroc(&scores, &labels) {
                Ok(a) => prop_assert_eq!(a, pair_count(&scores, &labels)),
                Err(_) => prop_assert!(labels.iter().all(|&y| y) || labels.iter().all(|&y| !y)),
            }
        }

        #[test]
        fn monotone_transforms_do_not_change_auroc(
            pts in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..100)
        ) {
            let scores: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = pts.iter().map(|p| p.1).collect();
            prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
            let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 10.0).collect();
            let a = auroc(&scores, &labels).unwrap();
            // rounding may merge nearly equal scores, which is not a strict transform
            let distinct = |v: &[f64]| { let mut s = v.to_vec(); s.sort_by(f64::total_cmp); s.dedup(); s.len() };
            for t in [&shifted, &squashed] {
                if distinct(t) == distinct(&scores) {
                    prop_assert_eq!(a, auroc(t, &labels).unwrap());
                }
            }
        }
    }
}
