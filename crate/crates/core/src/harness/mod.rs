//! Experiment families: accuracy against known coefficients, and stability
//! under input noise, seed changes, hyperparameter re-tuning, and redundant
//! features.
//!
//! Iteration `i` of a run uses seed `root_seed + i`; each consumer inside
//! the iteration draws from its own [`rng::derive`] stream, so iterations
//! are independent and can run on a worker pool. Records are always
//! returned in iteration order.

pub mod config;
pub mod report;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, load_csv, DataError, DataSet, FeatureKind, NoiseLevel, SyntheticSpec, Task};
use crate::ensemble::{self, fit, random_search, Ensemble, FitError, HyperParams};
use crate::explain::{gain_importance, shap_global, ExplainError, ImportanceVector};
use crate::matrix::Matrix;
use crate::metrics::{has_magnitude_ties, topk_rank_accuracy, CorrelationPair, MetricError, RankCategory};
use crate::rng::{self, Stream};

pub use config::{AuditFile, DataSource, ExperimentConfig, ExperimentKind, ParamOverrides};
pub use report::{aggregate, Aggregates, CellKey, ColumnSummary, ExperimentReport, RankProportion};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model fitting failed: {0}")]
    Fit(#[from] FitError),
    #[error("explanation failed: {0}")]
    Explain(#[from] ExplainError),
    #[error("metric failed: {0}")]
    Metric(#[from] MetricError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed report: {0}")]
    Report(String),
}

/// One iteration of any experiment. Paired experiments fill
/// `prediction_corr` and compare model A with model B; the accuracy
/// experiment compares importances with the true |coefficients|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub gain_corr: CorrelationPair,
    pub shap_corr: CorrelationPair,
    pub prediction_corr: Option<CorrelationPair>,
    pub rank_outcomes_gain: Vec<RankCategory>,
    pub rank_outcomes_shap: Vec<RankCategory>,
    /// Held-out AUROC (classification) or RMSE (regression) of model A.
    pub model_metric: Option<f64>,
    /// Model A's importances, indexed by original feature identity.
    pub gain_importance: Vec<f64>,
    pub shap_importance: Vec<f64>,
    pub sanity_flag: bool,
    /// Some importance vector had exactly tied magnitudes.
    pub ties: bool,
}

/// Run the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let fixed = match &config.data {
        DataSource::Csv { path, schema } => Some(load_csv(path, schema)?),
        DataSource::Synthetic { .. } => None,
    };
    let records = (0..config.n_iterations)
        .into_par_iter()
        .map(|i| iteration(config, fixed.as_ref(), i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport::new(config, records))
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentReport, HarnessError> {
    if config.experiment != kind {
        return Err(HarnessError::Config(format!("expected a {kind} config, got {}", config.experiment)));
    }
    run(config)
}

pub fn run_accuracy(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    expect_kind(config, ExperimentKind::Accuracy)
}

pub fn run_input_perturbation(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    expect_kind(config, ExperimentKind::InputPerturbation)
}

pub fn run_seed_perturbation(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    expect_kind(config, ExperimentKind::SeedPerturbation)
}

pub fn run_hyperparam_perturbation(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    expect_kind(config, ExperimentKind::HyperparamPerturbation)
}

pub fn run_redundancy(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    expect_kind(config, ExperimentKind::Redundancy)
}

struct Explained {
    model: Ensemble,
    gain: ImportanceVector,
    shap: ImportanceVector,
}

fn fit_and_explain(train: &DataSet, params: &HyperParams, config: &ExperimentConfig) -> Result<Explained, HarnessError> {
    let model = fit(train, params, config.family)?;
    let gain = gain_importance(&model, true);
    let shap = shap_global(&model, &train.x)?;
    Ok(Explained { model, gain, shap })
}

fn held_out_metric(model: &Ensemble, test: &DataSet) -> Result<Option<f64>, HarnessError> {
    let pred = model.predict(&test.x)?;
    Ok(match test.task {
        Task::Classification => ensemble::auroc(&pred, &test.y).ok(),
        Task::Regression => Some(ensemble::rmse(&pred, &test.y)),
    })
}

fn iteration(config: &ExperimentConfig, fixed: Option<&DataSet>, i: usize) -> Result<IterationRecord, HarnessError> {
    let seed = config.iteration_seed(i);
    match config.experiment {
        ExperimentKind::Accuracy => accuracy_iteration(config, i, seed),
        ExperimentKind::Redundancy => redundancy_iteration(config, i, seed),
        _ => paired_iteration(config, fixed, i, seed),
    }
}

fn synthetic(config: &ExperimentConfig, seed: u64) -> Result<(DataSet, Vec<f64>), HarnessError> {
    match config.data {
        DataSource::Synthetic { n_samples, n_features } => {
            let mut spec = SyntheticSpec::new(n_samples, n_features, rng::derive(seed, Stream::Data));
            spec.coefficients = config.coefficients.clone();
            Ok(data::generate_synthetic(&spec)?)
        }
        DataSource::Csv { .. } => Err(HarnessError::Config(format!("{} needs a synthetic source", config.experiment))),
    }
}

fn record(iteration: usize, seed: u64, a: &Explained) -> IterationRecord {
    IterationRecord {
        iteration,
        seed,
        gain_corr: CorrelationPair::default(),
        shap_corr: CorrelationPair::default(),
        prediction_corr: None,
        rank_outcomes_gain: Vec::new(),
        rank_outcomes_shap: Vec::new(),
        model_metric: None,
        gain_importance: a.gain.scores.clone(),
        shap_importance: a.shap.scores.clone(),
        sanity_flag: false,
        ties: has_magnitude_ties(&a.gain.scores) || has_magnitude_ties(&a.shap.scores),
    }
}

fn accuracy_iteration(config: &ExperimentConfig, i: usize, seed: u64) -> Result<IterationRecord, HarnessError> {
    let (mut full, coef) = synthetic(config, seed)?;
    if config.noise != NoiseLevel::None {
        full = data::add_noise(&full, config.noise, rng::derive(seed, Stream::Noise));
    }
    let (train, test) = data::train_test_split(&full, config.holdout, rng::derive(seed, Stream::Split));
    let params = config
        .params
        .resolve(config.family, full.n_features())
        .with_seed(rng::derive(seed, Stream::Fit));
    let a = fit_and_explain(&train, &params, config)?;
    let truth: Vec<f64> = coef.iter().map(|c| c.abs()).collect();
    let mut rec = record(i, seed, &a);
    rec.gain_corr = CorrelationPair::between(&a.gain.scores, &truth);
    rec.shap_corr = CorrelationPair::between(&a.shap.scores, &truth);
    rec.rank_outcomes_gain = topk_rank_accuracy(&truth, &a.gain.scores, config.k)?.iter().map(|o| o.category).collect();
    rec.rank_outcomes_shap = topk_rank_accuracy(&truth, &a.shap.scores, config.k)?.iter().map(|o| o.category).collect();
    rec.model_metric = held_out_metric(&a.model, &test)?;
    Ok(rec)
}

fn paired_iteration(config: &ExperimentConfig, fixed: Option<&DataSet>, i: usize, seed: u64) -> Result<IterationRecord, HarnessError> {
    let full = match fixed {
        Some(d) => d.clone(),
        None => synthetic(config, seed)?.0,
    };
    let (train, test) = data::train_test_split(&full, config.holdout, rng::derive(seed, Stream::Split));
    let d = full.n_features();
    let fit_seed = rng::derive(seed, Stream::Fit);
    let base = config.params.resolve(config.family, d).with_seed(fit_seed);

    let (a, b) = match config.experiment {
        ExperimentKind::InputPerturbation => {
            let noised = data::add_noise(&train, config.noise, rng::derive(seed, Stream::Noise));
            (fit_and_explain(&train, &base, config)?, fit_and_explain(&noised, &base, config)?)
        }
        ExperimentKind::SeedPerturbation => {
            let other = base.clone().with_seed(fit_seed.wrapping_add(config.pair_seed_offset));
            (fit_and_explain(&train, &base, config)?, fit_and_explain(&train, &other, config)?)
        }
        ExperimentKind::HyperparamPerturbation => {
            let search_seed = rng::derive(seed, Stream::Search);
            let budget = config.search_budget;
            let pa = random_search(&train, config.family, &base, &config.search, budget, search_seed)?;
            let pb = random_search(
                &train,
                config.family,
                &base,
                &config.search,
                budget,
                search_seed.wrapping_add(config.pair_seed_offset),
            )?;
            (fit_and_explain(&train, &pa, config)?, fit_and_explain(&train, &pb, config)?)
        }
        kind => unreachable!("{kind} is not a paired experiment"),
    };

    let mut rec = record(i, seed, &a);
    rec.ties |= has_magnitude_ties(&b.gain.scores) || has_magnitude_ties(&b.shap.scores);
    rec.gain_corr = CorrelationPair::between(&a.gain.scores, &b.gain.scores);
    rec.shap_corr = CorrelationPair::between(&a.shap.scores, &b.shap.scores);
    let pred = CorrelationPair::between(&a.model.predict(&full.x)?, &b.model.predict(&full.x)?);
    rec.sanity_flag = pred.pearson.is_none_or(|p| p < config.sanity_threshold);
    rec.prediction_corr = Some(pred);
    rec.model_metric = held_out_metric(&a.model, &test)?;
    Ok(rec)
}

/// `copies` identical columns of one uniform signal; the label is the
/// signal thresholded at its median.
pub fn redundant_data(n_samples: usize, copies: usize, seed: u64) -> DataSet {
    let mut rng = rng::seeded(seed);
    let signal: Vec<f64> = (0..n_samples).map(|_| rng.random::<f64>()).collect();
    let med = data::median(&signal);
    let y = signal.iter().map(|&s| if s > med { 1.0 } else { 0.0 }).collect();
    let mut x = Matrix::zeros(n_samples, copies);
    for (r, &s) in signal.iter().enumerate() {
        for c in 0..copies {
            x.set(r, c, s);
        }
    }
    DataSet::new(x, y, vec![FeatureKind::Continuous; copies], Task::Classification)
}

fn redundancy_iteration(config: &ExperimentConfig, i: usize, seed: u64) -> Result<IterationRecord, HarnessError> {
    let DataSource::Synthetic { n_samples, n_features } = config.data else {
        return Err(HarnessError::Config("redundancy needs a synthetic source".into()));
    };
    let full = redundant_data(n_samples, n_features, rng::derive(seed, Stream::Data));
    let mut order: Vec<usize> = (0..n_features).collect();
    if config.shuffle_features {
        order.shuffle(&mut rng::seeded(rng::derive(seed, Stream::Shuffle)));
    }
    let permuted = full.permute_columns(&order);
    let (train, test) = data::train_test_split(&permuted, config.holdout, rng::derive(seed, Stream::Split));
    let params = config
        .params
        .resolve(config.family, n_features)
        .with_seed(rng::derive(seed, Stream::Fit));
    let a = fit_and_explain(&train, &params, config)?;
    // Column j of the fitted data is original feature order[j].
    let unshuffle = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for (j, &s) in v.iter().enumerate() {
            out[order[j]] = s;
        }
        out
    };
    let mut rec = record(i, seed, &a);
    rec.gain_importance = unshuffle(&a.gain.scores);
    rec.shap_importance = unshuffle(&a.shap.scores);
    rec.model_metric = held_out_metric(&a.model, &test)?;
    Ok(rec)
}

#[cfg(test)]
mod tests;
