//! Model-quality scores.

use crate::metrics::{midranks, MetricError};

/// Area under the ROC curve via midranks: the probability that a random
/// positive scores above a random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("AUROC needs both classes"));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let n_pos = n_pos as f64;
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Mean binary cross-entropy of probabilities (clipped away from 0 and 1).
pub fn log_loss(probs: &[f64], labels: &[f64]) -> f64 {
    let eps = 1e-15;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / probs.len() as f64
}

pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    mean_squared_error(pred, target).sqrt()
}
