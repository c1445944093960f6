//! Ranking-accuracy indices: RGA, the reverse index AGR, and the
//! self-reference value, plus the score rescaling used when comparing
//! models that emit scores on different scales.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// RGA, AGR and self-reference value for one (scores, truth) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rga: f64,
    pub agr: f64,
    pub self_value: f64,
    pub n_test: usize,
}

fn check_pair(scores: &[f64], y: &[f64]) -> Result<f64> {
    if scores.len() != y.len() {
        return Err(Error::Dimension(format!(
            "scores length {} != response length {}",
            scores.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Invalid("empty input".into()));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    if ybar == 0.0 {
        return Err(Error::DegenerateResponse);
    }
    Ok(ybar)
}

/// Rank Graduation Accuracy: order the response by ascending score and
/// accumulate squared deviations of the cumulative response share from the
/// uniform share, weighted by n/i. Ties in the ranking variable are broken
/// by original index so that tied scores carry no ordering information.
pub fn rga(scores_est: &[f64], y_true: &[f64]) -> Result<f64> {
    let ybar = check_pair(scores_est, y_true)?;
    let n = y_true.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        scores_est[a].partial_cmp(&scores_est[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let denom = n as f64 * ybar;
    let mut cum = 0.0;
    let mut total = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        cum += y_true[i];
        let share = (pos + 1) as f64 / n as f64;
        let dev = cum / denom - share;
        total += (n as f64 / (pos + 1) as f64) * dev * dev;
    }
    Ok(total)
}

/// Reverse index: RGA with the roles of truth and estimate exchanged —
/// order the scores by ascending truth and evaluate the same sum on the
/// reordered scores.
pub fn agr(scores_est: &[f64], y_true: &[f64]) -> Result<f64> {
    rga(y_true, scores_est)
}

/// RGA of the truth ranked by itself (the tables' "Self" row).
pub fn self_reference(y_true: &[f64]) -> Result<f64> {
    rga(y_true, y_true)
}

/// Full report for one test set.
pub fn accuracy_report(scores_est: &[f64], y_true: &[f64]) -> Result<AccuracyReport> {
    Ok(AccuracyReport {
        rga: rga(scores_est, y_true)?,
        agr: agr(scores_est, y_true)?,
        self_value: self_reference(y_true)?,
        n_test: y_true.len(),
    })
}

/// Affinely rescale a score vector onto the level scale [1, k], so that
/// scores from models with incommensurable output scales (levels, training
/// ranks, conditional quantiles) are comparable in the shift-sensitive
/// response role of AGR. A constant vector maps to all ones. RGA is
/// unaffected (it only uses the induced order).
pub fn rescale_to_levels(scores: &[f64], k: usize) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; scores.len()];
    }
    let span = (k - 1) as f64;
    scores.iter().map(|&s| 1.0 + span * (s - lo) / (hi - lo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const C_EST: [f64; 5] = [1.0, 3.0, 2.0, 2.9, 10.0];
    const C_TR1: [f64; 5] = [1.0, 3.0, 2.0, 2.0, 9.0];
    const C_TR2: [f64; 5] = [1.0, 5.0, 3.0, 3.0, 7.0];

    #[test]
    fn example_rga_values() {
        assert_abs_diff_eq!(rga(&C_EST, &C_TR1).unwrap(), 0.5161, epsilon = 5e-4);
        assert_abs_diff_eq!(rga(&C_EST, &C_TR2).unwrap(), 0.3232, epsilon = 5e-4);
    }

    #[test]
    fn example_agr_invariant_across_truths() {
        let a1 = agr(&C_EST, &C_TR1).unwrap();
        let a2 = agr(&C_EST, &C_TR2).unwrap();
        assert_abs_diff_eq!(a1, 0.5272, epsilon = 5e-4);
        assert_abs_diff_eq!(a2, 0.5272, epsilon = 5e-4);
        assert_abs_diff_eq!(a1, a2, epsilon = 1e-12);
    }

    #[test]
    fn constant_response_gives_zero() {
        let s = [0.3, 0.9, 0.1, 0.5];
        assert_abs_diff_eq!(rga(&s, &[2.0; 4]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(agr(&[2.0; 4], &s).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_mean_response_rejected() {
        assert!(matches!(rga(&[1.0, 2.0], &[0.0, 0.0]), Err(Error::DegenerateResponse)));
        assert!(matches!(rga(&[1.0, 2.0], &[-1.0, 1.0]), Err(Error::DegenerateResponse)));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(rga(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn self_reference_equals_rga_with_scores_y() {
        let y = [1.0, 2.0, 2.0, 3.0, 9.0];
        assert_abs_diff_eq!(
            self_reference(&y).unwrap(),
            rga(&y, &y).unwrap(),
            epsilon = 1e-15
        );
    }

    // Term-by-term oracle for rga(y, y) with y = (1,3,2,2,9): reorder
    // ascending (1,2,2,3,9), cum shares over n·ȳ = 17.
    #[test]
    fn self_reference_term_by_term_oracle() {
        let y = [1.0, 3.0, 2.0, 2.0, 9.0];
        let sorted = [1.0, 2.0, 2.0, 3.0, 9.0];
        let denom = 17.0;
        let mut cum = 0.0;
        let mut expect = 0.0;
        for (i, v) in sorted.iter().enumerate() {
            cum += v;
            let dev = cum / denom - (i + 1) as f64 / 5.0;
            expect += 5.0 / (i + 1) as f64 * dev * dev;
        }
        assert_abs_diff_eq!(self_reference(&y).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn rescale_maps_to_level_range() {
        let s = [10.0, 20.0, 15.0];
        let r = rescale_to_levels(&s, 4);
        assert_abs_diff_eq!(r[0], 1.0);
        assert_abs_diff_eq!(r[1], 4.0);
        assert_abs_diff_eq!(r[2], 2.5);
    }

    #[test]
    fn rescale_constant_scores() {
        assert_eq!(rescale_to_levels(&[7.0; 3], 4), vec![1.0; 3]);
    }

    #[test]
    fn rga_invariant_to_positive_rescaling_of_ranking() {
        let y = [1.0, 3.0, 2.0, 2.0, 9.0];
        let a = rga(&C_EST, &y).unwrap();
        let scaled: Vec<f64> = C_EST.iter().map(|s| s * 12.5 + 3.0).collect();
        let b = rga(&scaled, &y).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}
