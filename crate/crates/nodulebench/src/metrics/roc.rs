//! Receiver operating characteristic over image-level scores.

use super::MetricsError;

/// One operating point. A sample is called positive when its score is
/// greater than or equal to the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    pub threshold: f64,
}

/// Operating points at every distinct score, threshold descending, plus the
/// `(0, 0)` anchor at threshold +inf. The area under the curve equals the
/// Mann-Whitney statistic (ties count one half).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Builds the ROC curve and its AUC.
///
/// The AUC is computed with midranks, which is algebraically the pairwise
/// Mann-Whitney statistic: mean over (positive, negative) pairs of 1 for a
/// win, 0.5 for a tie, 0 for a loss.
pub fn compute_roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    let auc = auc_mann_whitney(scores, labels, n_pos, n_neg);

    // Operating points: sweep distinct scores descending.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group at this threshold.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            false_positive_rate: fp as f64 / n_neg as f64,
            true_positive_rate: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve { points, auc })
}

/// Midrank AUC, shared with the DeLong test so both report bit-identical
/// values.
pub(crate) fn auc_mann_whitney(scores: &[f64], labels: &[bool], n_pos: usize, n_neg: usize) -> f64 {
    let ranks = midranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let p = n_pos as f64;
    (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n_neg as f64)
}

/// 1-based ranks with ties replaced by the mean rank of the tie group.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Tie group occupies ranks i+1 ..= j; assign their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = mid;
        }
        i = j;
    }
    ranks
}
