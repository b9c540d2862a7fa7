//! Tree ensembles trained from scratch: random forests, first-order gradient
//! boosting, and second-order (Newton) boosting.

mod builder;
pub mod score;
pub mod search;
pub mod serialize;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataSet, Task};
use crate::matrix::Matrix;
use crate::rng;
use builder::{grow_tree, Criterion, FeatureSampling, GrowSpec, Presorted, RowStats};

pub use score::{auroc, log_loss, rmse};
pub use search::{random_search, IntRange, RealRange, SearchSpace};
pub use tree::{NodeKind, Tree, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("no usable features (every column is constant or absent)")]
    NoUsableFeatures,
    #[error("expected {expected} feature columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "gbm")]
    GradientBoosting,
    #[serde(rename = "xgb")]
    SecondOrderBoosting,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SecondOrderBoosting, Family::GradientBoosting, Family::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::RandomForest => "rf",
            Family::GradientBoosting => "gbm",
            Family::SecondOrderBoosting => "xgb",
        }
    }

    pub fn is_boosting(self) -> bool {
        !matches!(self, Family::RandomForest)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "random_forest" => Ok(Family::RandomForest),
            "gbm" | "gradient_boosting" => Ok(Family::GradientBoosting),
            "xgb" | "second_order_boosting" => Ok(Family::SecondOrderBoosting),
            other => Err(format!("unknown model family `{other}` (rf|gbm|xgb)")),
        }
    }
}

/// How exact ties between equally good splits on different features are
/// resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Always the lowest feature index; fits ignore the seed unless
    /// subsampling is enabled.
    LowestIndex,
    /// Uniform among the tied features, drawn from the fit seed.
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    /// Random forest: bootstrap draws as a fraction of n (with replacement).
    /// Boosting: rows per tree as a fraction of n (without replacement).
    pub row_subsample: f64,
    /// Random forest: fraction of features drawn at each node.
    /// Boosting: fraction of features drawn once per tree.
    pub feature_subsample: f64,
    pub tie_break: TieBreak,
    pub seed: u64,
    /// L2 penalty on leaf values (second-order boosting only).
    pub l2_regularization: f64,
    /// Minimum hessian sum per child (second-order boosting only).
    pub min_child_hessian: f64,
}

impl HyperParams {
    /// Family defaults modelled on the usual library defaults, with the
    /// forest depth capped to keep Tree SHAP affordable.
    pub fn defaults_for(family: Family, n_features: usize) -> Self {
        match family {
            Family::RandomForest => HyperParams {
                n_trees: 100,
                max_depth: 8,
                min_samples_leaf: 1,
                learning_rate: 1.0,
                row_subsample: 1.0,
                feature_subsample: (n_features.max(1) as f64).sqrt().floor() / n_features.max(1) as f64,
                tie_break: TieBreak::SeededRandom,
                seed: 0,
                l2_regularization: 0.0,
                min_child_hessian: 0.0,
            },
            Family::GradientBoosting => HyperParams {
                n_trees: 100,
                max_depth: 3,
                min_samples_leaf: 1,
                learning_rate: 0.1,
                row_subsample: 1.0,
                feature_subsample: 1.0,
                tie_break: TieBreak::SeededRandom,
                seed: 0,
                l2_regularization: 0.0,
                min_child_hessian: 0.0,
            },
            Family::SecondOrderBoosting => HyperParams {
                n_trees: 100,
                max_depth: 6,
                min_samples_leaf: 1,
                learning_rate: 0.3,
                row_subsample: 1.0,
                feature_subsample: 1.0,
                tie_break: TieBreak::LowestIndex,
                seed: 0,
                l2_regularization: 1.0,
                min_child_hessian: 1.0,
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::InvalidParams(m.to_string()));
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return bad("n_trees, max_depth and min_samples_leaf must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.row_subsample > 0.0 && self.row_subsample <= 1.0)
            || !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0)
        {
            return bad("subsample fractions must lie in (0, 1]");
        }
        if !(self.l2_regularization >= 0.0) || !(self.min_child_hessian >= 0.0) {
            return bad("regularization terms must be non-negative");
        }
        Ok(())
    }

    fn feature_count(&self, n_features: usize) -> usize {
        ((self.feature_subsample * n_features as f64 + 1e-9).floor() as usize).clamp(1, n_features)
    }
}

/// A fitted ensemble. Raw output is
/// `base_score + tree_weight() * sum(tree outputs)`; for classification
/// boosting that is a log-odds margin, for forests a class-1 frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub family: Family,
    pub task: Task,
    pub n_features: usize,
}

impl Ensemble {
    /// Multiplier applied to each tree's output.
    pub fn tree_weight(&self) -> f64 {
        match self.family {
            Family::RandomForest => 1.0 / self.trees.len() as f64,
            _ => self.learning_rate,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.tree_weight() * sum
    }

    /// Raw (margin) predictions for every row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, FitError> {
        if x.cols() != self.n_features {
            return Err(FitError::ShapeMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }

    /// Class-1 probabilities; `None` for regression models.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Option<Vec<f64>>, FitError> {
        if self.task == Task::Regression {
            return Ok(None);
        }
        let raw = self.predict(x)?;
        Ok(Some(match self.family {
            Family::RandomForest => raw.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            _ => raw.into_iter().map(sigmoid).collect(),
        }))
    }

    /// Structural checks plus cover conservation (parent == left + right
    /// within a relative 1e-9).
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.trees.is_empty() {
            return Err("ensemble has no trees".into());
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.check_structure().map_err(|e| format!("tree {t}: {e}"))?;
            for (i, node) in tree.nodes.iter().enumerate() {
                if let NodeKind::Split {
                    feature,
                    left,
                    right,
                    impurity_decrease,
                    ..
                } = node.kind
                {
                    if feature >= self.n_features {
                        return Err(format!("tree {t} node {i}: feature {feature} out of range"));
                    }
                    if !(impurity_decrease >= 0.0) {
                        return Err(format!("tree {t} node {i}: negative impurity decrease"));
                    }
                    let sum = tree.nodes[left].cover + tree.nodes[right].cover;
                    if (node.cover - sum).abs() > 1e-9 * node.cover.abs().max(1.0) {
                        return Err(format!("tree {t} node {i}: cover {} != {}", node.cover, sum));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn log_odds(y: &[f64]) -> f64 {
    let p = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

/// Fit an ensemble of `family` to `data` (task taken from the dataset).
pub fn fit(data: &DataSet, params: &HyperParams, family: Family) -> Result<Ensemble, FitError> {
    params.validate()?;
    let n = data.n_samples();
    let d = data.n_features();
    if n < 2 {
        return Err(FitError::Degenerate(format!("{n} samples; at least 2 required")));
    }
    if d == 0 {
        return Err(FitError::NoUsableFeatures);
    }
    if data.y.iter().any(|v| !v.is_finite()) || data.x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FitError::Degenerate("non-finite values in data".into()));
    }
    if data.task == Task::Classification && data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(FitError::Degenerate("classification labels must be 0 or 1".into()));
    }
    let pre = Presorted::new(&data.x);
    if (0..d).all(|j| pre.is_constant(j)) {
        return Err(FitError::NoUsableFeatures);
    }
    let mut rng = rng::seeded(params.seed);
    let trees = match family {
        Family::RandomForest => fit_forest(data, params, &pre, &mut rng),
        Family::GradientBoosting | Family::SecondOrderBoosting => {
            return Ok(fit_boosting(data, params, family, &pre, &mut rng));
        }
    };
    Ok(Ensemble {
        trees,
        base_score: 0.0,
        learning_rate: 1.0,
        family,
        task: data.task,
        n_features: d,
    })
}

fn weighted_mean(members: &[u32], w: &[f64], t: &[f64]) -> f64 {
    let (sw, st) = members
        .iter()
        .fold((0.0, 0.0), |(sw, st), &i| (sw + w[i as usize], st + w[i as usize] * t[i as usize]));
    st / sw
}

fn fit_forest(data: &DataSet, params: &HyperParams, pre: &Presorted, rng: &mut rng::Rng) -> Vec<Tree> {
    let n = data.n_samples();
    let d = data.n_features();
    let draws = ((params.row_subsample * n as f64).round() as usize).max(1);
    let spec = GrowSpec {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf as f64,
        criterion: match data.task {
            Task::Classification => Criterion::Gini,
            Task::Regression => Criterion::Variance,
        },
        tie_break: params.tie_break,
        sampling: FeatureSampling::PerNode(params.feature_count(d)),
    };
    let y = &data.y;
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let mut w = vec![0.0; n];
        for _ in 0..draws {
            w[rng.random_range(0..n)] += 1.0;
        }
        let a: Vec<f64> = (0..n).map(|i| w[i] * y[i]).collect();
        let b: Vec<f64> = (0..n).map(|i| w[i] * y[i] * y[i]).collect();
        let stats = RowStats { w: &w, a: &a, b: &b };
        let leaf = |m: &[u32]| weighted_mean(m, &w, y);
        trees.push(grow_tree(pre, &stats, &spec, rng, &leaf));
    }
    trees
}

fn row_weights(n: usize, fraction: f64, rng: &mut rng::Rng) -> Vec<f64> {
    if fraction >= 1.0 {
        return vec![1.0; n];
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut w = vec![0.0; n];
    for i in rand::seq::index::sample(rng, n, k) {
        w[i] = 1.0;
    }
    w
}

fn fit_boosting(data: &DataSet, params: &HyperParams, family: Family, pre: &Presorted, rng: &mut rng::Rng) -> Ensemble {
    let n = data.n_samples();
    let d = data.n_features();
    let y = &data.y;
    let classification = data.task == Task::Classification;
    let base_score = if classification {
        log_odds(y)
    } else {
        y.iter().sum::<f64>() / n as f64
    };
    let criterion = match family {
        Family::SecondOrderBoosting => Criterion::SecondOrder {
            lambda: params.l2_regularization,
            min_child_hessian: params.min_child_hessian,
        },
        _ => Criterion::Variance,
    };
    let n_cols = params.feature_count(d);
    let mut margin = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let w = row_weights(n, params.row_subsample, rng);
        let sampling = if n_cols < d {
            let mut cols = rand::seq::index::sample(rng, d, n_cols).into_vec();
            cols.sort_unstable();
            FeatureSampling::Fixed(cols)
        } else {
            FeatureSampling::All
        };
        let spec = GrowSpec {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf as f64,
            criterion,
            tie_break: params.tie_break,
            sampling,
        };
        let pred: Vec<f64> = if classification {
            margin.iter().map(|&m| sigmoid(m)).collect()
        } else {
            margin.clone()
        };
        let tree = match family {
            Family::SecondOrderBoosting => {
                let (g, h): (Vec<f64>, Vec<f64>) = (0..n)
                    .map(|i| {
                        if classification {
                            (pred[i] - y[i], pred[i] * (1.0 - pred[i]))
                        } else {
                            (pred[i] - y[i], 1.0)
                        }
                    })
                    .unzip();
                let a: Vec<f64> = (0..n).map(|i| w[i] * g[i]).collect();
                let b: Vec<f64> = (0..n).map(|i| w[i] * h[i]).collect();
                let lambda = params.l2_regularization;
                let leaf = |m: &[u32]| {
                    let (sg, sh) = m
                        .iter()
                        .fold((0.0, 0.0), |(sg, sh), &i| (sg + a[i as usize], sh + b[i as usize]));
                    -sg / (sh + lambda)
                };
                grow_tree(pre, &RowStats { w: &w, a: &a, b: &b }, &spec, rng, &leaf)
            }
            _ => {
                let r: Vec<f64> = (0..n).map(|i| y[i] - pred[i]).collect();
                let a: Vec<f64> = (0..n).map(|i| w[i] * r[i]).collect();
                let b: Vec<f64> = (0..n).map(|i| w[i] * r[i] * r[i]).collect();
                let stats = RowStats { w: &w, a: &a, b: &b };
                if classification {
                    // One Newton step per leaf on the logistic loss.
                    let leaf = |m: &[u32]| {
                        let (num, den) = m.iter().fold((0.0, 0.0), |(num, den), &i| {
                            let i = i as usize;
                            (num + w[i] * r[i], den + w[i] * pred[i] * (1.0 - pred[i]))
                        });
                        if den.abs() < 1e-150 {
                            0.0
                        } else {
                            num / den
                        }
                    };
                    grow_tree(pre, &stats, &spec, rng, &leaf)
                } else {
                    let leaf = |m: &[u32]| weighted_mean(m, &w, &r);
                    grow_tree(pre, &stats, &spec, rng, &leaf)
                }
            }
        };
        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict_row(data.x.row(i));
        }
        trees.push(tree);
    }
    Ensemble {
        trees,
        base_score,
        learning_rate: params.learning_rate,
        family,
        task: data.task,
        n_features: d,
    }
}
