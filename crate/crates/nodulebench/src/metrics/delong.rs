//! DeLong's nonparametric comparison of two correlated AUCs.
//!
//! Both scores are evaluated on the same images, so the AUC estimates are
//! correlated; the variance of their difference comes from the structural
//! components (per-positive and per-negative placement values).

use super::roc::auc_mann_whitney;
use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub variance_a: f64,
    pub variance_b: f64,
    pub covariance: f64,
    pub z_statistic: f64,
    /// Two-sided, from the standard normal tail.
    pub p_value: f64,
}

/// Midrank-free placement values: for each positive, the fraction of
/// negatives it beats (ties half); for each negative, the fraction of
/// positives beating it.
fn placements(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let mut v10 = vec![0.0; pos.len()];
    let mut v01 = vec![0.0; neg.len()];
    for (i, &x) in pos.iter().enumerate() {
        for (j, &y) in neg.iter().enumerate() {
            let psi = if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
            v10[i] += psi;
            v01[j] += psi;
        }
    }
    for v in &mut v10 {
        *v /= neg.len() as f64;
    }
    for v in &mut v01 {
        *v /= pos.len() as f64;
    }
    (v10, v01)
}

/// Sample covariance with denominator `n - 1`; zero for fewer than two
/// observations.
fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mean_a: f64 = a.iter().sum::<f64>() / n as f64;
    let mean_b: f64 = b.iter().sum::<f64>() / n as f64;
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - mean_a) * (y - mean_b))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Compares two score vectors over the same labelled images.
///
/// Returns the AUCs, their variances and covariance from the structural
/// components, the z statistic, and the two-sided normal p-value. With a
/// zero-variance difference the result is `z = 0, p = 1` when the AUCs are
/// equal, and an error when they differ (no finite z exists).
pub fn delong_test(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
) -> Result<DelongResult, MetricsError> {
    if scores_a.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores_a.len(), labels.len()));
    }
    if scores_b.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores_b.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    // The reported AUCs share the ROC code path, so `delong_test` and
    // `compute_roc` always agree bit for bit.
    let auc_a = auc_mann_whitney(scores_a, labels, n_pos, n_neg);
    let auc_b = auc_mann_whitney(scores_b, labels, n_pos, n_neg);

    let (v10_a, v01_a) = placements(scores_a, labels);
    let (v10_b, v01_b) = placements(scores_b, labels);

    let m = n_pos as f64;
    let n = n_neg as f64;
    let variance_a = sample_cov(&v10_a, &v10_a) / m + sample_cov(&v01_a, &v01_a) / n;
    let variance_b = sample_cov(&v10_b, &v10_b) / m + sample_cov(&v01_b, &v01_b) / n;
    let covariance = sample_cov(&v10_a, &v10_b) / m + sample_cov(&v01_a, &v01_b) / n;

    let var_diff = (variance_a + variance_b - 2.0 * covariance).max(0.0);
    let (z_statistic, p_value) = if var_diff == 0.0 {
        if auc_a == auc_b {
            (0.0, 1.0)
        } else {
            return Err(MetricsError::ZeroVariance);
        }
    } else {
        let z = (auc_a - auc_b) / var_diff.sqrt();
        // Two-sided tail of the standard normal: 2 * (1 - Phi(|z|)).
        let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
        (z, p)
    };

    Ok(DelongResult {
        auc_a,
        auc_b,
        variance_a,
        variance_b,
        covariance,
        z_statistic,
        p_value,
    })
}
