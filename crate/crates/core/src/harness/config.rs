//! Experiment configuration: one resolved [`ExperimentConfig`] per report
//! cell, and the declarative [`AuditFile`] that expands into a sweep of them.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{NoiseLevel, Schema};
use crate::ensemble::{Family, HyperParams, SearchSpace, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Accuracy,
    InputPerturbation,
    SeedPerturbation,
    HyperparamPerturbation,
    Redundancy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Accuracy,
        ExperimentKind::InputPerturbation,
        ExperimentKind::SeedPerturbation,
        ExperimentKind::HyperparamPerturbation,
        ExperimentKind::Redundancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Accuracy => "accuracy",
            ExperimentKind::InputPerturbation => "input_perturbation",
            ExperimentKind::SeedPerturbation => "seed_perturbation",
            ExperimentKind::HyperparamPerturbation => "hyperparam_perturbation",
            ExperimentKind::Redundancy => "redundancy",
        }
    }

    /// Whether each iteration compares two fitted models.
    pub fn is_paired(self) -> bool {
        matches!(
            self,
            ExperimentKind::InputPerturbation | ExperimentKind::SeedPerturbation | ExperimentKind::HyperparamPerturbation
        )
    }

    pub fn default_iterations(self) -> usize {
        match self {
            ExperimentKind::Redundancy => 30,
            _ => 50,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh synthetic data per iteration. For the redundancy experiment
    /// `n_features` is the number of identical copies.
    Synthetic { n_samples: usize, n_features: usize },
    Csv { path: PathBuf, schema: Schema },
}

impl DataSource {
    pub fn n_features_label(&self) -> Option<usize> {
        match self {
            DataSource::Synthetic { n_features, .. } => Some(*n_features),
            DataSource::Csv { .. } => None,
        }
    }
}

/// Optional per-field overrides on top of the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub learning_rate: Option<f64>,
    pub row_subsample: Option<f64>,
    pub feature_subsample: Option<f64>,
    pub tie_break: Option<TieBreak>,
    pub l2_regularization: Option<f64>,
    pub min_child_hessian: Option<f64>,
}

impl ParamOverrides {
    pub fn resolve(&self, family: Family, n_features: usize) -> HyperParams {
        let mut p = HyperParams::defaults_for(family, n_features);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        take!(
            n_trees,
            max_depth,
            min_samples_leaf,
            learning_rate,
            row_subsample,
            feature_subsample,
            tie_break,
            l2_regularization,
            min_child_hessian
        );
        p
    }
}

/// Everything needed to replay one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub family: Family,
    pub data: DataSource,
    pub noise: NoiseLevel,
    pub n_iterations: usize,
    pub k: usize,
    pub root_seed: u64,
    pub params: ParamOverrides,
    pub search: SearchSpace,
    pub search_budget: usize,
    /// Model B's fit (or search) seed is model A's plus this offset.
    pub pair_seed_offset: u64,
    pub shuffle_features: bool,
    pub sanity_threshold: f64,
    pub holdout: f64,
    /// Fixed true coefficients for synthetic data instead of random draws.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, family: Family, data: DataSource) -> Self {
        Self {
            experiment,
            family,
            data,
            noise: NoiseLevel::None,
            n_iterations: experiment.default_iterations(),
            k: 3,
            root_seed: 0,
            params: ParamOverrides::default(),
            search: SearchSpace::default(),
            search_budget: 5,
            pair_seed_offset: 1,
            shuffle_features: false,
            sanity_threshold: 0.7,
            holdout: 0.2,
            coefficients: None,
        }
    }

    pub fn synthetic(experiment: ExperimentKind, family: Family, n_samples: usize, n_features: usize) -> Self {
        Self::new(experiment, family, DataSource::Synthetic { n_samples, n_features })
    }

    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        self.root_seed.wrapping_add(iteration as u64)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return bad(format!("holdout fraction {} must lie in (0, 1)", self.holdout));
        }
        if self.experiment == ExperimentKind::HyperparamPerturbation && self.search_budget == 0 {
            return bad("search_budget must be at least 1".into());
        }
        match (&self.data, self.experiment) {
            (DataSource::Csv { .. }, ExperimentKind::Accuracy) => {
                return bad("the accuracy experiment needs synthetic data (true coefficients)".into())
            }
            (DataSource::Csv { .. }, ExperimentKind::Redundancy) => {
                return bad("the redundancy experiment generates its own data; use a synthetic source".into())
            }
            (DataSource::Synthetic { n_samples, n_features }, kind) => {
                if *n_features == 0 || *n_samples < 10 {
                    return bad(format!("synthetic data needs n_features >= 1 and n_samples >= 10 (got {n_samples}x{n_features})"));
                }
                if kind == ExperimentKind::Accuracy && self.k > *n_features {
                    return bad(format!("k = {} exceeds n_features = {n_features}", self.k));
                }
                if self.coefficients.as_ref().is_some_and(|c| c.len() != *n_features) {
                    return bad(format!("expected {n_features} coefficients"));
                }
            }
            _ => {}
        }
        if self.noise != NoiseLevel::None
            && !matches!(self.experiment, ExperimentKind::Accuracy | ExperimentKind::InputPerturbation)
        {
            return bad(format!("noise is only meaningful for accuracy and input_perturbation, not {}", self.experiment));
        }
        self.params
            .resolve(self.family, 1)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// A value or a list of values; lists expand into a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    Synthetic {
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default = "default_features")]
        n_features: OneOrMany<usize>,
    },
    Csv {
        path: PathBuf,
        schema: Schema,
    },
}

fn default_samples() -> usize {
    300
}

fn default_features() -> OneOrMany<usize> {
    OneOrMany::One(5)
}

/// On-disk audit configuration (TOML). `family`, `noise` and
/// `data.n_features` may be lists; the audit runs their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFile {
    pub experiment: ExperimentKind,
    #[serde(default = "default_family")]
    pub family: OneOrMany<Family>,
    #[serde(default = "default_noise")]
    pub noise: OneOrMany<NoiseLevel>,
    pub n_iterations: Option<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub root_seed: Option<u64>,
    #[serde(default = "default_budget")]
    pub search_budget: usize,
    #[serde(default = "default_offset")]
    pub pair_seed_offset: u64,
    #[serde(default)]
    pub shuffle_features: bool,
    #[serde(default = "default_threshold")]
    pub sanity_threshold: f64,
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    /// Defaults to 300 x 5 synthetic data (1000 samples x 10 copies for
    /// the redundancy experiment).
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub search: Option<SearchSpace>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

fn default_family() -> OneOrMany<Family> {
    OneOrMany::One(Family::SecondOrderBoosting)
}
fn default_noise() -> OneOrMany<NoiseLevel> {
    OneOrMany::One(NoiseLevel::None)
}
fn default_k() -> usize {
    3
}
fn default_budget() -> usize {
    5
}
fn default_offset() -> u64 {
    1
}
fn default_threshold() -> f64 {
    0.7
}
fn default_holdout() -> f64 {
    0.2
}

impl AuditFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Expand into one config per (family, n_features, noise) cell, in that
    /// nesting order. `root_seed` falls back to `seed_fallback`.
    pub fn expand(&self, seed_fallback: u64) -> Result<Vec<ExperimentConfig>, HarnessError> {
        let data = self.data.clone().unwrap_or(match self.experiment {
            ExperimentKind::Redundancy => DataSection::Synthetic {
                n_samples: 1000,
                n_features: OneOrMany::One(10),
            },
            _ => DataSection::Synthetic {
                n_samples: default_samples(),
                n_features: default_features(),
            },
        });
        let sources: Vec<DataSource> = match &data {
            DataSection::Synthetic { n_samples, n_features } => n_features
                .to_vec()
                .into_iter()
                .map(|d| DataSource::Synthetic {
                    n_samples: *n_samples,
                    n_features: d,
                })
                .collect(),
            DataSection::Csv { path, schema } => vec![DataSource::Csv {
                path: path.clone(),
                schema: schema.clone(),
            }],
        };
        let (families, noises) = (self.family.to_vec(), self.noise.to_vec());
        if families.is_empty() || noises.is_empty() || sources.is_empty() {
            return Err(HarnessError::Config("family, noise and n_features lists must be non-empty".into()));
        }
        let mut out = Vec::new();
        for &family in &families {
            for source in &sources {
                for &noise in &noises {
                    let mut c = ExperimentConfig::new(self.experiment, family, source.clone());
                    c.noise = noise;
                    c.n_iterations = self.n_iterations.unwrap_or(self.experiment.default_iterations());
                    c.k = self.k;
                    c.root_seed = self.root_seed.unwrap_or(seed_fallback);
                    c.params = self.params.clone();
                    c.search = self.search.clone().unwrap_or_default();
                    c.search_budget = self.search_budget;
                    c.pair_seed_offset = self.pair_seed_offset;
                    c.shuffle_features = self.shuffle_features;
                    c.sanity_threshold = self.sanity_threshold;
                    c.holdout = self.holdout;
                    c.coefficients = self.coefficients.clone();
                    c.validate()?;
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}
