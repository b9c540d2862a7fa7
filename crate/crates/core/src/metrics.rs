//! Rank-based accuracy and stability statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("k must lie in 1..={0}")]
    InvalidK(usize),
}

/// 1-based ranks in ascending order, tied values sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooShort(a.len()));
    }
    Ok(())
}

/// Product-moment correlation. Constant inputs are undefined, not zero.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::Undefined("constant input to correlation"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of the midrank transforms.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    pearson(&midranks(a), &midranks(b))
}

/// Spearman and Pearson of the same pair; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
}

impl CorrelationPair {
    pub fn between(a: &[f64], b: &[f64]) -> Self {
        Self {
            spearman: spearman(a, b).ok(),
            pearson: pearson(a, b).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCategory {
    Correct,
    IncorrectButTop,
    Incorrect,
}

impl RankCategory {
    pub fn code(self) -> char {
        match self {
            RankCategory::Correct => 'C',
            RankCategory::IncorrectButTop => 'T',
            RankCategory::Incorrect => 'I',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'C' => Some(RankCategory::Correct),
            'T' => Some(RankCategory::IncorrectButTop),
            'I' => Some(RankCategory::Incorrect),
            _ => None,
        }
    }
}

/// Where the feature holding true rank `rank_position` landed in the
/// estimated ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub category: RankCategory,
    pub rank_position: usize,
}

impl RankOutcome {
    pub fn classify(true_rank: usize, estimated_rank: usize, k: usize) -> RankCategory {
        if estimated_rank == true_rank {
            RankCategory::Correct
        } else if estimated_rank <= k {
            RankCategory::IncorrectButTop
        } else {
            RankCategory::Incorrect
        }
    }
}

/// Feature indices ordered by descending magnitude, ties to the lowest index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    order
}

/// True if any two magnitudes are exactly equal (the tie policy was used).
pub fn has_magnitude_ties(scores: &[f64]) -> bool {
    let order = rank_order(scores);
    order.windows(2).any(|w| scores[w[0]].abs() == scores[w[1]].abs())
}

/// For each true rank 1..=k, categorize where that feature falls in the
/// estimated ranking.
pub fn topk_rank_accuracy(true_scores: &[f64], estimated_scores: &[f64], k: usize) -> Result<Vec<RankOutcome>, MetricError> {
    if true_scores.len() != estimated_scores.len() {
        return Err(MetricError::LengthMismatch(true_scores.len(), estimated_scores.len()));
    }
    if k == 0 || k > true_scores.len() {
        return Err(MetricError::InvalidK(true_scores.len()));
    }
    let truth = rank_order(true_scores);
    let mut est_rank = vec![0usize; estimated_scores.len()];
    for (pos, &f) in rank_order(estimated_scores).iter().enumerate() {
        est_rank[f] = pos + 1;
    }
    Ok(truth[..k]
        .iter()
        .enumerate()
        .map(|(pos, &f)| RankOutcome {
            category: RankOutcome::classify(pos + 1, est_rank[f], k),
            rank_position: pos + 1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(midranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let a = [0.3, 1.2, -4.0, 7.5, 2.2];
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        let mut sorted = a.to_vec();
        sorted.sort_by(f64::total_cmp);
        let reversed: Vec<f64> = sorted.iter().rev().copied().collect();
        assert_eq!(spearman(&sorted, &reversed).unwrap(), -1.0);
    }

    #[test]
    fn spearman_with_ties_matches_hand_ranks() {
        // a=(1,2,2,4) -> ranks (1,2.5,2.5,4); b=(1,3,2,4) -> ranks (1,3,2,4).
        // Rank means 2.5 and 2.5; deviations (-1.5,0,0,1.5) and (-1.5,.5,-.5,1.5):
        // cov = 2.25+0+0+2.25 = 4.5, var_a = 4.5, var_b = 5.0.
        let expected = 4.5 / (4.5f64 * 5.0).sqrt();
        let got = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn pearson_cases() {
        let a = [1.0, 2.0, 3.0, 4.0, 6.0];
        assert_eq!(pearson(&a, &a).unwrap(), 1.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(pearson(&a, &neg).unwrap(), -1.0);
        let b = [2.0, 1.0, 4.0, 3.0, 7.0];
        // means 3.2 and 3.4; direct covariance / (sigma sigma)
        let (ma, mb) = (3.2, 3.4);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        let expected = cov / (va.sqrt() * vb.sqrt());
        assert!((pearson(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_inputs_are_undefined() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricError::Undefined(_))));
        assert!(matches!(spearman(&[1.0, 2.0], &[5.0, 5.0]), Err(MetricError::Undefined(_))));
        let pair = CorrelationPair::between(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pair, CorrelationPair { spearman: None, pearson: None });
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(MetricError::TooShort(1))));
    }

    #[test]
    fn topk_all_correct_for_same_ordering() {
        let t = [5.0, -9.0, 1.0, 3.0, 0.5];
        let e = [0.2, 0.5, 0.01, 0.1, 0.0];
        let out = topk_rank_accuracy(&t, &e, 3).unwrap();
        assert!(out.iter().all(|o| o.category == RankCategory::Correct));
        assert_eq!(out.iter().map(|o| o.rank_position).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn topk_swapped_leaders() {
        // true order: f1, f0, f3; estimated swaps f1 and f0.
        let t = [5.0, -9.0, 1.0, 3.0, 0.5];
        let e = [0.6, 0.5, 0.01, 0.1, 0.0];
        let cats: Vec<_> = topk_rank_accuracy(&t, &e, 3).unwrap().into_iter().map(|o| o.category).collect();
        assert_eq!(
            cats,
            vec![RankCategory::IncorrectButTop, RankCategory::IncorrectButTop, RankCategory::Correct]
        );
    }

    #[test]
    fn topk_outside_top_is_incorrect_and_k_validated() {
        let t = [3.0, 2.0, 1.0, 0.0];
        let e = [0.0, 2.0, 1.0, 3.0];
        let out = topk_rank_accuracy(&t, &e, 2).unwrap();
        assert_eq!(out[0].category, RankCategory::Incorrect);
        assert!(topk_rank_accuracy(&t, &e, 0).is_err());
        assert!(topk_rank_accuracy(&t, &e, 5).is_err());
    }

    #[test]
    fn rank_ties_go_to_lowest_index() {
        assert_eq!(rank_order(&[1.0, 3.0, -3.0, 0.0]), vec![1, 2, 0, 3]);
        assert!(has_magnitude_ties(&[1.0, 3.0, -3.0]));
        assert!(!has_magnitude_ties(&[1.0, 2.0]));
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(
            a in prop::collection::vec(-100.0f64..100.0, 3..30),
            seed in 0u64..1000,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v.sin() + (i as u64 ^ seed) as f64 * 0.01).collect();
            if let Ok(base) = spearman(&a, &b) {
                let fa: Vec<f64> = a.iter().map(|v| v.powi(3) + 3.0 * v + 1.0).collect();
                let gb: Vec<f64> = b.iter().map(|v| (0.5 * v).exp()).collect();
                let mapped = spearman(&fa, &gb).unwrap();
                prop_assert!((base - mapped).abs() < 1e-12);
            }
        }

        #[test]
        fn correlations_are_symmetric(
            a in prop::collection::vec(-10.0f64..10.0, 2..20),
            b in prop::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            prop_assert_eq!(spearman(a, b).ok(), spearman(b, a).ok());
            if let (Ok(x), Ok(y)) = (pearson(a, b), pearson(b, a)) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }

        #[test]
        fn topk_invariant_under_positive_rescaling(
            t in prop::collection::vec(-10.0f64..10.0, 3..12),
            e in prop::collection::vec(0.0f64..1.0, 3..12),
            scale in 0.001f64..1000.0,
        ) {
            let n = t.len().min(e.len());
            let (t, e) = (&t[..n], &e[..n]);
            let k = n.min(3);
            let base = topk_rank_accuracy(t, e, k).unwrap();
            let st: Vec<f64> = t.iter().map(|v| v * scale).collect();
            let se: Vec<f64> = e.iter().map(|v| v * scale).collect();
            prop_assert_eq!(&base, &topk_rank_accuracy(&st, e, k).unwrap());
            prop_assert_eq!(&base, &topk_rank_accuracy(t, &se, k).unwrap());
        }
    }
}
