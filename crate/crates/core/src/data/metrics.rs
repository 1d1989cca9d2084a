//! Regression and classification metrics.

pub fn mse(y: &[f64], pred: &[f64]) -> f64 {
    assert_eq!(y.len(), pred.len());
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Coefficient of determination. For a constant target it is 1 when the
/// residuals are exactly zero and 0 otherwise.
pub fn r2(y: &[f64], pred: &[f64]) -> f64 {
    assert_eq!(y.len(), pred.len());
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    if !ss_res.is_finite() {
        return f64::NEG_INFINITY;
    }
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

const PROB_CLIP: f64 = 1e-15;

/// Mean binary cross-entropy with probabilities clipped away from 0 and 1.
pub fn log_loss(y: &[f64], p: &[f64]) -> f64 {
    assert_eq!(y.len(), p.len());
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(p).map(|(&t, &q)| row_log_loss(t, q)).sum::<f64>() / y.len() as f64
}

pub(crate) fn row_log_loss(t: f64, q: f64) -> f64 {
    if !q.is_finite() {
        return f64::INFINITY;
    }
    let q = q.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
}

/// Average precision: the step-wise sum of precision times recall increment
/// over descending score thresholds. Tied scores form a single threshold.
pub fn auprc(y: &[f64], scores: &[f64]) -> f64 {
    assert_eq!(y.len(), scores.len());
    let positives = y.iter().filter(|&&t| t == 1.0).count();
    if positives == 0 {
        return 0.0;
    }
    let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])));

    let mut ap = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = key(scores[order[i]]);
        while i < order.len() && key(scores[order[i]]) == s {
            if y[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn threshold_labels(p: &[f64], threshold: f64) -> Vec<f64> {
    p.iter().map(|&q| if q >= threshold { 1.0 } else { 0.0 }).collect()
}

/// Mean of per-class recalls over the classes present in `y`.
pub fn balanced_accuracy(y: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(y.len(), labels.len());
    let mut hits = [0usize; 2];
    let mut counts = [0usize; 2];
    for (&t, &l) in y.iter().zip(labels) {
        let c = usize::from(t != 0.0);
        counts[c] += 1;
        if (l != 0.0) == (t != 0.0) {
            hits[c] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| counts[c] > 0)
        .map(|c| hits[c] as f64 / counts[c] as f64)
        .collect();
    if recalls.is_empty() {
        return 0.0;
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Fraction of runs whose R² strictly exceeds `threshold`.
pub fn accuracy_solution(r2_values: &[f64], threshold: f64) -> f64 {
    if r2_values.is_empty() {
        return 0.0;
    }
    r2_values.iter().filter(|&&r| r > threshold).count() as f64 / r2_values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(d²) average precision: for each distinct threshold, count directly.
    fn brute_force_ap(y: &[f64], s: &[f64]) -> f64 {
        let pos = y.iter().filter(|&&t| t == 1.0).count() as f64;
        let mut thresholds: Vec<f64> = s.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev = 0.0;
        for t in thresholds {
            let mut tp = 0.0;
            let mut sel = 0.0;
            for i in 0..y.len() {
                if s[i] >= t {
                    sel += 1.0;
                    if y[i] == 1.0 {
                        tp += 1.0;
                    }
                }
            }
            let recall = tp / pos;
            ap += (recall - prev) * (tp / sel);
            prev = recall;
        }
        ap
    }

    #[test]
    fn perfect_predictions() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r2(&y, &y), 1.0);
        assert_eq!(mse(&y, &y), 0.0);
    }

    #[test]
    fn constant_target_r2() {
        assert_eq!(r2(&[2.0, 2.0], &[2.0, 2.0]), 1.0);
        assert_eq!(r2(&[2.0, 2.0], &[2.0, 2.5]), 0.0);
    }

    #[test]
    fn perfect_ranking_has_unit_auprc() {
        let y = [0.0, 1.0, 0.0, 1.0, 1.0];
        let p = [0.1, 0.9, 0.2, 0.8, 0.95];
        assert_eq!(auprc(&y, &p), 1.0);
    }

    #[test]
    fn constant_scorer_yields_prevalence() {
        let y = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert!((auprc(&y, &[0.3; 8]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn auprc_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let y: Vec<f64> = (0..100).map(|_| f64::from(rng.random_bool(0.3))).collect();
            if !y.contains(&1.0) {
                continue;
            }
            // coarse scores so that ties occur
            let p: Vec<f64> = (0..100).map(|_| (rng.random_range(0..20) as f64) / 20.0).collect();
            let a = auprc(&y, &p);
            let b = brute_force_ap(&y, &p);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn balanced_accuracy_averages_recalls() {
        let y = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let l = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert!((balanced_accuracy(&y, &l) - (0.5 + 0.75) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_solution_is_strict() {
        assert_eq!(accuracy_solution(&[0.999, 0.9995, 1.0, 0.5], 0.999), 0.5);
    }

    proptest! {
        #[test]
        fn r2_is_permutation_invariant(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40),
            rot in 0usize..40,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let k = rot % y.len();
            let mut y2 = y.clone();
            let mut p2 = p.clone();
            y2.rotate_left(k);
            p2.rotate_left(k);
            let (a, b) = (r2(&y, &p), r2(&y2, &p2));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
