//! Global feature importance: gain and path-dependent Tree SHAP, plus an
//! exact subset-enumeration Shapley oracle.

mod exact;
mod tree_shap;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{Ensemble, NodeKind};
use crate::matrix::Matrix;

pub use exact::MAX_ORACLE_FEATURES;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("tree {tree} lacks valid cover statistics; refit the model to record them")]
    MissingCover { tree: usize },
    #[error("expected {expected} features, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("exact Shapley enumeration refuses {0} features (limit {MAX_ORACLE_FEATURES})")]
    TooManyFeatures(usize),
    #[error("cannot explain an empty matrix")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gain,
    TreeShap,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gain => "gain",
            Method::TreeShap => "shap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub scores: Vec<f64>,
    pub method: Method,
    pub normalized: bool,
}

impl ImportanceVector {
    pub fn is_all_zero(&self) -> bool {
        self.scores.iter().all(|&s| s == 0.0)
    }

    /// Index of the largest score, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = j;
            }
        }
        best
    }
}

/// Per-feature contributions for one row; `base + sum(phi)` is the raw
/// model output.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAttribution {
    pub phi: Vec<f64>,
    pub base: f64,
}

impl LocalAttribution {
    pub fn total(&self) -> f64 {
        self.base + self.phi.iter().sum::<f64>()
    }
}

/// Impurity decrease summed per feature within each tree, averaged over
/// trees and optionally normalized to sum to one. An ensemble of stumps
/// yields all zeros (see [`ImportanceVector::is_all_zero`]).
pub fn gain_importance(model: &Ensemble, normalize: bool) -> ImportanceVector {
    let mut scores = vec![0.0; model.n_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let NodeKind::Split {
                feature,
                impurity_decrease,
                ..
            } = node.kind
            {
                scores[feature] += impurity_decrease;
            }
        }
    }
    let t = model.trees.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= t);
    if normalize {
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            scores.iter_mut().for_each(|s| *s /= total);
        }
    }
    ImportanceVector {
        scores,
        method: Method::Gain,
        normalized: normalize,
    }
}

fn check_model(model: &Ensemble, width: usize) -> Result<(), ExplainError> {
    if width != model.n_features {
        return Err(ExplainError::ShapeMismatch {
            expected: model.n_features,
            got: width,
        });
    }
    match model.trees.iter().position(|t| !t.has_valid_covers()) {
        Some(tree) => Err(ExplainError::MissingCover { tree }),
        None => Ok(()),
    }
}

/// Expected raw output with no feature known.
pub fn expected_output(model: &Ensemble) -> f64 {
    let w = model.tree_weight();
    model.base_score + w * model.trees.iter().map(|t| t.expected_value()).sum::<f64>()
}

/// Path-dependent Tree SHAP attribution of the raw output at `x`.
pub fn tree_shap_local(model: &Ensemble, x: &[f64]) -> Result<LocalAttribution, ExplainError> {
    check_model(model, x.len())?;
    Ok(local_unchecked(model, x))
}

fn local_unchecked(model: &Ensemble, x: &[f64]) -> LocalAttribution {
    let w = model.tree_weight();
    let mut phi = vec![0.0; model.n_features];
    for tree in &model.trees {
        tree_shap::accumulate(tree, x, w, &mut phi);
    }
    LocalAttribution {
        phi,
        base: expected_output(model),
    }
}

/// Tree SHAP for every row of `x`, in row order.
pub fn tree_shap_matrix(model: &Ensemble, x: &Matrix) -> Result<Vec<LocalAttribution>, ExplainError> {
    check_model(model, x.cols())?;
    Ok((0..x.rows()).into_par_iter().map(|i| local_unchecked(model, x.row(i))).collect())
}

/// Mean absolute Tree SHAP value per feature over the rows of `x`.
pub fn shap_global(model: &Ensemble, x: &Matrix) -> Result<ImportanceVector, ExplainError> {
    if x.rows() == 0 {
        return Err(ExplainError::EmptyInput);
    }
    let locals = tree_shap_matrix(model, x)?;
    let mut scores = vec![0.0; model.n_features];
    for a in &locals {
        for (s, p) in scores.iter_mut().zip(&a.phi) {
            *s += p.abs();
        }
    }
    let n = x.rows() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    Ok(ImportanceVector {
        scores,
        method: Method::TreeShap,
        normalized: false,
    })
}

/// Shapley values by enumerating all 2^d feature subsets, each evaluated as
/// the cover-weighted conditional expectation of the ensemble.
pub fn exact_shapley_oracle(model: &Ensemble, x: &[f64]) -> Result<LocalAttribution, ExplainError> {
    let d = model.n_features;
    if d > MAX_ORACLE_FEATURES {
        return Err(ExplainError::TooManyFeatures(d));
    }
    check_model(model, x.len())?;
    let w = model.tree_weight();
    let mut value = vec![model.base_score; 1 << d];
    for tree in &model.trees {
        // A tree only depends on the subset restricted to its own features.
        let mut used: Vec<usize> = tree
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Split { feature, .. } => Some(feature),
                _ => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        let mask: u32 = used.iter().fold(0, |m, &f| m | 1 << f);
        let mut cache = vec![f64::NAN; 1 << d];
        for (s, v) in value.iter_mut().enumerate() {
            let key = s as u32 & mask;
            if cache[key as usize].is_nan() {
                cache[key as usize] = exact::conditional_expectation(tree, x, key);
            }
            *v += w * cache[key as usize];
        }
    }
    let (phi, base) = exact::shapley_from_values(d, &value);
    Ok(LocalAttribution { phi, base })
}

/// CSV with columns `feature_index,feature_name,method,score`.
pub fn write_importance_csv<W: Write>(
    out: W,
    names: &[String],
    vectors: &[&ImportanceVector],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_index", "feature_name", "method", "score"])?;
    for v in vectors {
        for (j, s) in v.scores.iter().enumerate() {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
            w.write_record([j.to_string(), name, v.method.as_str().to_string(), format!("{s:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
