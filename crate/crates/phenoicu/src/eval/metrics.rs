//! Core metric functions.
//!
//! AUC-ROC uses the Mann-Whitney pair-counting form with ties worth one half,
//! computed from exact integer counts so it agrees bit-for-bit with a brute
//! pairwise enumeration. AUC-PR is average precision over the descending
//! threshold sweep. Kappa supports linear (default) and unweighted modes.

use super::EvalError;

/// Sorted (score, label) pairs grouped by tied score, ascending.
fn score_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for (score, label) in pairs {
        match groups.last_mut() {
            Some((s, pos, neg)) if *s == score => {
                *pos += u64::from(label);
                *neg += u64::from(!label);
            }
            _ => groups.push((score, u64::from(label), u64::from(!label))),
        }
    }
    groups
}

/// Area under the ROC curve: concordant pairs plus half the tied pairs over
/// all positive-negative pairs.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|l| **l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut concordant = 0u64;
    let mut tied = 0u64;
    let mut negatives_below = 0u64;
    for (_, pos, neg) in score_groups(scores, labels) {
        concordant += pos * negatives_below;
        tied += pos * neg;
        negatives_below += neg;
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / (positives as f64 * negatives as f64))
}

/// Average precision: sum of precision-weighted recall increments over the
/// descending threshold sweep, with tied scores handled as one threshold.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|l| **l).count() as u64;
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut groups = score_groups(scores, labels);
    groups.reverse(); // descending
    let mut tp = 0u64;
    let mut predicted = 0u64;
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    for (_, pos, neg) in groups {
        tp += pos;
        predicted += pos + neg;
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / predicted as f64;
        ap += (recall - last_recall) * precision;
        last_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaWeighting {
    None,
    Linear,
}

/// Cohen's kappa over classes `0..n_classes`:
/// `1 - sum(w*observed) / sum(w*expected)` with `w = |i-j|` in linear mode.
/// Perfect agreement with no expected disagreement is 1.
pub fn kappa(
    pred: &[u8],
    truth: &[u8],
    weighting: KappaWeighting,
    n_classes: usize,
) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let k = n_classes;
    let mut observed = vec![0.0f64; k * k];
    for (p, t) in pred.iter().zip(truth) {
        observed[*p as usize * k + *t as usize] += 1.0;
    }
    let n = pred.len() as f64;
    let mut row = vec![0.0f64; k];
    let mut col = vec![0.0f64; k];
    for i in 0..k {
        for j in 0..k {
            row[i] += observed[i * k + j];
            col[j] += observed[i * k + j];
        }
    }
    let weight = |i: usize, j: usize| -> f64 {
        match weighting {
            KappaWeighting::Linear => (i as f64 - j as f64).abs(),
            KappaWeighting::None => f64::from(i != j),
        }
    };
    let mut w_obs = 0.0;
    let mut w_exp = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = weight(i, j);
            w_obs += w * observed[i * k + j];
            w_exp += w * row[i] * col[j] / n;
        }
    }
    if w_exp == 0.0 {
        return Ok(if w_obs == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - w_obs / w_exp)
}

/// Representative remaining-stay hours per class, near the mass center of
/// each bin; the open bins use 12 hours and 18 days.
pub const LOS_REPRESENTATIVE_HOURS: [f64; 10] =
    [12.0, 36.0, 60.0, 84.0, 108.0, 132.0, 156.0, 180.0, 264.0, 432.0];

/// Mean absolute deviation between the representative hours of the predicted
/// class and the true remaining hours.
pub fn mad(pred_classes: &[u8], true_remaining_hours: &[f64]) -> Result<f64, EvalError> {
    if pred_classes.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred_classes.len() != true_remaining_hours.len() {
        return Err(EvalError::LengthMismatch(
            pred_classes.len(),
            true_remaining_hours.len(),
        ));
    }
    let total: f64 = pred_classes
        .iter()
        .zip(true_remaining_hours)
        .map(|(c, h)| (LOS_REPRESENTATIVE_HOURS[*c as usize] - h).abs())
        .sum();
    Ok(total / pred_classes.len() as f64)
}

/// Mean squared error of predicted probability against the binary outcome.
pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    if probs.len() != labels.len() {
        return Err(EvalError::LengthMismatch(probs.len(), labels.len()));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let d = p - f64::from(*y);
            d * d
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub observed_frequency: f64,
    pub count: usize,
}

/// Reliability curve over equal-width probability bins; empty bins are
/// omitted.
pub fn calibration_curve(probs: &[f64], labels: &[bool], n_bins: usize) -> Vec<CalibrationBin> {
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_bins]; // (sum p, positives, count)
    for (p, y) in probs.iter().zip(labels) {
        let bin = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sums[bin].0 += p;
        sums[bin].1 += usize::from(*y);
        sums[bin].2 += 1;
    }
    sums.into_iter()
        .filter(|(_, _, count)| *count > 0)
        .map(|(sum_p, pos, count)| CalibrationBin {
            mean_predicted: sum_p / count as f64,
            observed_frequency: pos as f64 / count as f64,
            count,
        })
        .collect()
}
