//! Uniform random hyperparameter search scored by k-fold cross-validation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{fit, Family, FitError, HyperParams};
use crate::data::{DataSet, Task};
use crate::ensemble::score::{log_loss, mean_squared_error};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntRange {
    Fixed(usize),
    /// Inclusive bounds.
    Uniform { lo: usize, hi: usize },
    Choice(Vec<usize>),
}

impl IntRange {
    fn sample(&self, rng: &mut Rng) -> usize {
        match self {
            IntRange::Fixed(v) => *v,
            IntRange::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            IntRange::Choice(v) => v[rng.random_range(0..v.len())],
        }
    }

    fn validate(&self, name: &str) -> Result<(), FitError> {
        let ok = match self {
            IntRange::Fixed(v) => *v > 0,
            IntRange::Uniform { lo, hi } => *lo > 0 && lo <= hi,
            IntRange::Choice(v) => !v.is_empty() && v.iter().all(|&x| x > 0),
        };
        if ok {
            Ok(())
        } else {
            Err(FitError::InvalidParams(format!("search range for {name} is empty or non-positive")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealRange {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl RealRange {
    fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            RealRange::Fixed(v) => *v,
            RealRange::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            RealRange::LogUniform { lo, hi } => (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp(),
        }
    }

    fn validate(&self, name: &str) -> Result<(), FitError> {
        let ok = match self {
            RealRange::Fixed(v) => v.is_finite(),
            RealRange::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            RealRange::LogUniform { lo, hi } => *lo > 0.0 && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(FitError::InvalidParams(format!("search range for {name} is invalid")))
        }
    }
}

/// Independent sampling distribution per searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_trees: IntRange,
    pub max_depth: IntRange,
    pub learning_rate: RealRange,
    pub min_samples_leaf: IntRange,
    pub row_subsample: RealRange,
    pub feature_subsample: RealRange,
    pub cv_folds: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_trees: IntRange::Uniform { lo: 20, hi: 300 },
            max_depth: IntRange::Uniform { lo: 2, hi: 8 },
            learning_rate: RealRange::LogUniform { lo: 0.01, hi: 0.3 },
            min_samples_leaf: IntRange::Uniform { lo: 1, hi: 20 },
            row_subsample: RealRange::Uniform { lo: 0.6, hi: 1.0 },
            feature_subsample: RealRange::Uniform { lo: 0.6, hi: 1.0 },
            cv_folds: 3,
        }
    }
}

impl SearchSpace {
    /// Degenerate space: every dimension pinned to `base`.
    pub fn pinned(base: &HyperParams) -> Self {
        Self {
            n_trees: IntRange::Fixed(base.n_trees),
            max_depth: IntRange::Fixed(base.max_depth),
            learning_rate: RealRange::Fixed(base.learning_rate),
            min_samples_leaf: IntRange::Fixed(base.min_samples_leaf),
            row_subsample: RealRange::Fixed(base.row_subsample),
            feature_subsample: RealRange::Fixed(base.feature_subsample),
            cv_folds: 3,
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        self.n_trees.validate("n_trees")?;
        self.max_depth.validate("max_depth")?;
        self.min_samples_leaf.validate("min_samples_leaf")?;
        self.learning_rate.validate("learning_rate")?;
        self.row_subsample.validate("row_subsample")?;
        self.feature_subsample.validate("feature_subsample")?;
        if self.cv_folds < 2 {
            return Err(FitError::InvalidParams("cv_folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Draw one configuration; fields outside the space come from `base`.
    pub fn sample(&self, base: &HyperParams, rng: &mut Rng) -> HyperParams {
        HyperParams {
            n_trees: self.n_trees.sample(rng),
            max_depth: self.max_depth.sample(rng),
            learning_rate: self.learning_rate.sample(rng),
            min_samples_leaf: self.min_samples_leaf.sample(rng),
            row_subsample: self.row_subsample.sample(rng),
            feature_subsample: self.feature_subsample.sample(rng),
            ..base.clone()
        }
    }
}

/// Mean held-out loss over `folds` contiguous folds of a seeded permutation
/// (log-loss for classification, squared error for regression).
pub fn cross_validated_loss(
    data: &DataSet,
    params: &HyperParams,
    family: Family,
    folds: usize,
    seed: u64,
) -> Result<f64, FitError> {
    let n = data.n_samples();
    if folds < 2 || n < 2 * folds {
        return Err(FitError::Degenerate(format!("{n} samples cannot form {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut total = 0.0;
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let mut held: Vec<usize> = idx[lo..hi].to_vec();
        let mut train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        held.sort_unstable();
        train.sort_unstable();
        let (tr, te) = (data.subset(&train), data.subset(&held));
        let model = fit(&tr, params, family)?;
        total += match data.task {
            Task::Classification => {
                let p = model.predict_proba(&te.x)?.expect("classification model");
                log_loss(&p, &te.y)
            }
            Task::Regression => mean_squared_error(&model.predict(&te.x)?, &te.y),
        };
    }
    Ok(total / folds as f64)
}

/// Sample `budget` configurations from `space` around `base` and return the
/// one with the lowest cross-validated loss (earliest wins ties). Folds are
/// shuffled with `seed` itself, so any candidate can be re-scored with
/// [`cross_validated_loss`].
pub fn random_search(
    data: &DataSet,
    family: Family,
    base: &HyperParams,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<HyperParams, FitError> {
    if budget == 0 {
        return Err(FitError::InvalidParams("search budget must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = rng::seeded(rng::derive(seed, rng::Stream::Search));
    let candidates: Vec<HyperParams> = (0..budget).map(|_| space.sample(base, &mut rng)).collect();
    if budget == 1 {
        let only = candidates.into_iter().next().expect("one candidate");
        only.validate()?;
        return Ok(only);
    }
    let mut best: Option<(f64, HyperParams)> = None;
    for cand in candidates {
        let loss = cross_validated_loss(data, &cand, family, space.cv_folds, seed)?;
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, cand));
        }
    }
    Ok(best.expect("budget >= 1").1)
}
