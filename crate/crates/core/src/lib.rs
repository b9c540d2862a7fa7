//! Tree-ensemble training, global feature importances (gain and
//! path-dependent Tree SHAP), and accuracy/stability audits of those
//! importances under input noise and model perturbation.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: synthetic generation, calibrated noise, CSV ingestion.
//! - [`ensemble`]: CART trees, random forests, first- and second-order
//!   gradient boosting, random hyperparameter search, AUROC.
//! - [`explain`]: gain importance, Tree SHAP, and an exact Shapley oracle.
//! - [`metrics`]: Spearman/Pearson correlation and top-k rank accuracy.
//! - [`harness`]: the experiment families and their reports.
//! - [`cli`]: the `treetrust` command-line front end.

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod explain;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod rng;

pub use data::{DataSet, FeatureKind, NoiseLevel, SyntheticSpec, Task};
pub use ensemble::{fit, Ensemble, Family, HyperParams, TieBreak};
pub use explain::{gain_importance, shap_global, tree_shap_local, ImportanceVector, LocalAttribution};
pub use matrix::Matrix;
