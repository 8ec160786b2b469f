use crate::error::{Error, Result};

/// Threshold classifier over one scalar metric: predict the true class
/// when score >= threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub threshold: f64,
    pub calibration_accuracy: f64,
}

/// Pick the threshold maximizing accuracy on the calibration samples.
/// Candidates are midpoints between adjacent distinct sorted scores plus
/// one below and one above the range; among equally good candidates the
/// lowest wins, so the fit is deterministic.
pub fn fit_threshold(calibration: &[(f64, bool)]) -> Result<BaselineFit> {
    if calibration.is_empty() {
        return Err(Error::Input("empty calibration split".into()));
    }
    let has_true = calibration.iter().any(|&(_, l)| l);
    let has_false = calibration.iter().any(|&(_, l)| !l);
    if !has_true || !has_false {
        return Err(Error::Input("calibration split needs both labels".into()));
    }
    if calibration.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Input("calibration scores must be finite".into()));
    }
    let mut sorted: Vec<(f64, bool)> = calibration.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let total_true = sorted.iter().filter(|&&(_, l)| l).count();

    // candidate k means: predict true for indices k.., i.e. threshold
    // between sorted[k-1] and sorted[k]
    let mut best_k = 0usize;
    let mut best_correct = 0usize;
    let mut true_below = 0usize; // true-labeled among indices 0..k
    for k in 0..=n {
        // skip thresholds that would split equal scores
        let valid = k == 0 || k == n || sorted[k - 1].0 != sorted[k].0;
        if valid {
            // correct = false below the cut + true at or above it
            let false_below = k - true_below;
            let correct = false_below + (total_true - true_below);
            if correct > best_correct {
                best_correct = correct;
                best_k = k;
            }
        }
        if k < n && sorted[k].1 {
            true_below += 1;
        }
    }
    let threshold = if best_k == 0 {
        sorted[0].0 - 1.0
    } else if best_k == n {
        sorted[n - 1].0 + 1.0
    } else {
        (sorted[best_k - 1].0 + sorted[best_k].0) / 2.0
    };
    Ok(BaselineFit { threshold, calibration_accuracy: best_correct as f64 / n as f64 })
}

/// Calibrate on one split, report the error percentage on the other.
/// Returns the fit, the per-sample predictions on the evaluation split,
/// and the evaluation error in percent.
pub fn baseline_classify(
    calibration: &[(f64, bool)],
    evaluation: &[(f64, bool)],
) -> Result<(BaselineFit, Vec<bool>, f64)> {
    let fit = fit_threshold(calibration)?;
    if evaluation.is_empty() {
        return Err(Error::Input("empty evaluation split".into()));
    }
    let predictions: Vec<bool> = evaluation.iter().map(|&(s, _)| s >= fit.threshold).collect();
    let wrong = predictions
        .iter()
        .zip(evaluation)
        .filter(|(p, (_, l))| *p != l)
        .count();
    let error_pct = 100.0 * wrong as f64 / evaluation.len() as f64;
    Ok((fit, predictions, error_pct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separated_scores_classify_cleanly() {
        let cal = vec![(0.9, true), (1.0, true), (0.1, false), (0.2, false)];
        let (fit, _, err) = baseline_classify(&cal, &cal).unwrap();
        assert_eq!(err, 0.0);
        assert!(fit.threshold > 0.2 && fit.threshold < 0.9, "{}", fit.threshold);
    }

    #[test]
    fn identical_scores_give_majority_error() {
        let cal = vec![(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        let (_, _, err) = baseline_classify(&cal, &cal).unwrap();
        assert_eq!(err, 50.0);
    }

    #[test]
    fn single_label_calibration_rejected() {
        let cal = vec![(0.5, true), (0.7, true)];
        assert!(matches!(fit_threshold(&cal), Err(Error::Input(_))));
    }

    /// O(n^2) reference: try every candidate threshold by rescanning all
    /// samples.
    fn sweep_oracle(cal: &[(f64, bool)]) -> f64 {
        let mut scores: Vec<f64> = cal.iter().map(|&(s, _)| s).collect();
        scores.sort_by(f64::total_cmp);
        let mut candidates = vec![scores[0] - 1.0, scores[scores.len() - 1] + 1.0];
        for w in scores.windows(2) {
            if w[0] != w[1] {
                candidates.push((w[0] + w[1]) / 2.0);
            }
        }
        let mut best = 0usize;
        for &t in &candidates {
            let correct = cal.iter().filter(|&&(s, l)| (s >= t) == l).count();
            best = best.max(correct);
        }
        best as f64 / cal.len() as f64
    }

    #[test]
    fn matches_exhaustive_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let n = rng.gen_range(2..40);
            let mut cal: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    // coarse grid forces plenty of duplicate scores
                    let s = (rng.gen::<f64>() * 8.0).round() / 8.0;
                    (s, rng.gen::<bool>())
                })
                .collect();
            cal[0].1 = true;
            cal[1].1 = false;
            let fit = fit_threshold(&cal).unwrap();
            let oracle = sweep_oracle(&cal);
            assert_eq!(
                fit.calibration_accuracy, oracle,
                "case {case}: fit {} vs oracle {oracle}",
                fit.calibration_accuracy
            );
            // reported accuracy must match what the threshold achieves
            let achieved = cal
                .iter()
                .filter(|&&(s, l)| (s >= fit.threshold) == l)
                .count() as f64
                / cal.len() as f64;
            assert_eq!(fit.calibration_accuracy, achieved, "case {case}");
        }
    }
}
