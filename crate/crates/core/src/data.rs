//! Datasets: synthetic generation, calibrated Gaussian input noise, and CSV
//! ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Ingest { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// Binary (synthetic, with the binarization threshold) or integer-coded
    /// (ingested, no threshold).
    Categorical { threshold: Option<f64> },
}

impl FeatureKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, FeatureKind::Categorical { .. })
    }
}

/// Recipe for one synthetic dataset. Unset coefficients/kinds are drawn
/// from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub coefficients: Option<Vec<f64>>,
    pub kinds: Option<Vec<FeatureKind>>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, n_features: usize, seed: u64) -> Self {
        Self {
            n_samples,
            n_features,
            coefficients: None,
            kinds: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_features == 0 {
            return Err(DataError::InvalidSpec("n_features must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(DataError::InvalidSpec("n_samples must be at least 2".into()));
        }
        if let Some(c) = &self.coefficients {
            if c.len() != self.n_features {
                return Err(DataError::InvalidSpec(format!(
                    "{} coefficients for {} features",
                    c.len(),
                    self.n_features
                )));
            }
            if let Some(bad) = c.iter().find(|v| !(-10.0..=10.0).contains(*v)) {
                return Err(DataError::InvalidSpec(format!(
                    "coefficient {bad} outside [-10, 10]"
                )));
            }
        }
        if let Some(k) = &self.kinds {
            if k.len() != self.n_features {
                return Err(DataError::InvalidSpec(format!(
                    "{} kinds for {} features",
                    k.len(),
                    self.n_features
                )));
            }
            for kind in k {
                if let FeatureKind::Categorical { threshold: Some(t) } = kind {
                    if !(0.0..1.0).contains(t) {
                        return Err(DataError::InvalidSpec(format!(
                            "categorical threshold {t} outside [0, 1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
    pub feature_names: Vec<String>,
    pub task: Task,
    /// Rows discarded during ingestion because of missing values.
    pub dropped_rows: usize,
}

impl DataSet {
    pub fn new(x: Matrix, y: Vec<f64>, kinds: Vec<FeatureKind>, task: Task) -> Self {
        assert_eq!(x.rows(), y.len(), "row count mismatch between X and y");
        assert_eq!(x.cols(), kinds.len(), "one kind per column required");
        let feature_names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Self {
            x,
            y,
            kinds,
            feature_names,
            task,
            dropped_rows: 0,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, rows: &[usize]) -> DataSet {
        DataSet {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            kinds: self.kinds.clone(),
            feature_names: self.feature_names.clone(),
            task: self.task,
            dropped_rows: self.dropped_rows,
        }
    }

    /// Column-permuted copy: column `j` of the result is column `order[j]`.
    pub fn permute_columns(&self, order: &[usize]) -> DataSet {
        DataSet {
            x: self.x.select_columns(order),
            y: self.y.clone(),
            kinds: order.iter().map(|&j| self.kinds[j]).collect(),
            feature_names: order.iter().map(|&j| self.feature_names[j].clone()).collect(),
            task: self.task,
            dropped_rows: self.dropped_rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    None,
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 4] = [NoiseLevel::None, NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    /// Noise standard deviation as a multiple of the feature's own.
    pub fn multiplier(self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Low => 0.5,
            NoiseLevel::Medium => 1.0,
            NoiseLevel::High => 2.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseLevel::None => "none",
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NoiseLevel::None),
            "low" => Ok(NoiseLevel::Low),
            "medium" => Ok(NoiseLevel::Medium),
            "high" => Ok(NoiseLevel::High),
            other => Err(format!("unknown noise level `{other}` (none|low|medium|high)")),
        }
    }
}

/// Median of a non-empty slice (mean of the two middle values for even n).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Generate a labelled synthetic classification dataset.
///
/// Continuous columns are uniform on [0, 1); categorical columns are uniform
/// draws binarized at the column's threshold. The label is 1 where the
/// coefficient-weighted row sum is strictly greater than its median.
/// Returns the dataset and the ground-truth coefficients.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DataSet, Vec<f64>), DataError> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let d = spec.n_features;
    let n = spec.n_samples;

    let kinds: Vec<FeatureKind> = match &spec.kinds {
        Some(k) => k
            .iter()
            .map(|kind| match kind {
                FeatureKind::Categorical { threshold: None } => FeatureKind::Categorical {
                    threshold: Some(rng.random::<f64>()),
                },
                other => *other,
            })
            .collect(),
        None => (0..d)
            .map(|_| {
                if rng.random::<bool>() {
                    FeatureKind::Categorical {
                        threshold: Some(rng.random::<f64>()),
                    }
                } else {
                    FeatureKind::Continuous
                }
            })
            .collect(),
    };
    let coefficients: Vec<f64> = match &spec.coefficients {
        Some(c) => c.clone(),
        None => (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect(),
    };

    let mut x = Matrix::zeros(n, d);
    for (j, kind) in kinds.iter().enumerate() {
        for i in 0..n {
            let u: f64 = rng.random();
            let v = match kind {
                FeatureKind::Continuous => u,
                FeatureKind::Categorical { threshold } => {
                    if u > threshold.unwrap_or(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            x.set(i, j, v);
        }
    }

    let sums: Vec<f64> = x
        .iter_rows()
        .map(|r| r.iter().zip(&coefficients).map(|(v, c)| v * c).sum())
        .collect();
    let m = median(&sums);
    let y = sums.iter().map(|&s| if s > m { 1.0 } else { 0.0 }).collect();

    Ok((DataSet::new(x, y, kinds, Task::Classification), coefficients))
}

/// Population standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Add independent zero-mean Gaussian noise to every entry, scaled per column
/// to `level.multiplier()` times that column's standard deviation. Labels
/// are untouched and constant columns pass through unchanged.
pub fn add_noise(data: &DataSet, level: NoiseLevel, seed: u64) -> DataSet {
    let mut out = data.clone();
    let m = level.multiplier();
    if m == 0.0 {
        return out;
    }
    let mut rng = rng::seeded(seed);
    for j in 0..data.n_features() {
        let sigma = std_dev(&data.x.column(j));
        if !(sigma > 0.0) {
            continue;
        }
        let normal = Normal::new(0.0, m * sigma).expect("positive finite scale");
        for i in 0..data.n_samples() {
            let v = out.x.get(i, j) + normal.sample(&mut rng);
            out.x.set(i, j, v);
        }
    }
    out
}

/// Deterministic shuffled split; returns (train, held-out).
pub fn train_test_split(data: &DataSet, test_fraction: f64, seed: u64) -> (DataSet, DataSet) {
    let n = data.n_samples();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.min(n.saturating_sub(2));
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (data.subset(&train), data.subset(&test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Continuous,
    Categorical,
    Target,
    Ignore,
}

/// Column roles for CSV ingestion. Columns absent from `columns` are read
/// as continuous features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub task: Task,
    pub columns: BTreeMap<String, ColumnRole>,
}

impl Schema {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            columns: BTreeMap::new(),
        }
    }

    pub fn with(mut self, column: &str, role: ColumnRole) -> Self {
        self.columns.insert(column.to_string(), role);
        self
    }
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "?" | "null"
    )
}

/// Read a headed, comma-separated file into a [`DataSet`].
///
/// Rows with a missing target or any missing feature are dropped and
/// counted in `dropped_rows`. Non-numeric categorical columns are coded by
/// the sorted order of their distinct values.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<DataSet, DataError> {
    let ingest = |message: String| DataError::Ingest {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ingest(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(String::is_empty) {
        return Err(ingest("empty file (no header row)".into()));
    }
    for name in schema.columns.keys() {
        if !headers.contains(name) {
            return Err(ingest(format!("schema names unknown column `{name}`")));
        }
    }
    let role = |h: &str| schema.columns.get(h).copied().unwrap_or(ColumnRole::Continuous);
    let targets: Vec<usize> = (0..headers.len()).filter(|&c| role(&headers[c]) == ColumnRole::Target).collect();
    let target_col = match targets.as_slice() {
        [t] => *t,
        [] => return Err(ingest("schema declares no target column".into())),
        _ => return Err(ingest("schema declares more than one target column".into())),
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| matches!(role(&headers[c]), ColumnRole::Continuous | ColumnRole::Categorical))
        .collect();
    if feature_cols.is_empty() {
        return Err(ingest("no feature columns".into()));
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ingest(format!("row {}: {e}", line + 2)))?;
        let target = rec.get(target_col).unwrap_or("");
        if is_missing(target) || feature_cols.iter().any(|&c| is_missing(rec.get(c).unwrap_or(""))) {
            dropped += 1;
            continue;
        }
        raw.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if raw.is_empty() {
        return Err(ingest("no usable data rows".into()));
    }

    let n = raw.len();
    let mut x = Matrix::zeros(n, feature_cols.len());
    let mut kinds = Vec::with_capacity(feature_cols.len());
    for (j, &c) in feature_cols.iter().enumerate() {
        let categorical = role(&headers[c]) == ColumnRole::Categorical;
        let numeric: Option<Vec<f64>> = raw.iter().map(|r| r[c].parse::<f64>().ok()).collect();
        match (numeric, categorical) {
            (Some(vals), _) => {
                for (i, v) in vals.into_iter().enumerate() {
                    x.set(i, j, v);
                }
            }
            (None, true) => {
                let levels: BTreeSet<&str> = raw.iter().map(|r| r[c].as_str()).collect();
                let code: BTreeMap<&str, f64> =
                    levels.into_iter().enumerate().map(|(k, s)| (s, k as f64)).collect();
                for (i, r) in raw.iter().enumerate() {
                    x.set(i, j, code[r[c].as_str()]);
                }
            }
            (None, false) => {
                let (i, bad) = raw
                    .iter()
                    .enumerate()
                    .find(|(_, r)| r[c].parse::<f64>().is_err())
                    .map(|(i, r)| (i, r[c].clone()))
                    .unwrap_or_default();
                return Err(ingest(format!(
                    "column `{}`: cannot parse `{bad}` as a number (data row {})",
                    headers[c],
                    i + 1
                )));
            }
        }
        kinds.push(if categorical {
            FeatureKind::Categorical { threshold: None }
        } else {
            FeatureKind::Continuous
        });
    }

    let y: Vec<f64> = match schema.task {
        Task::Regression => raw
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[target_col].parse::<f64>().map_err(|_| {
                    ingest(format!(
                        "target `{}` is not numeric (data row {})",
                        r[target_col],
                        i + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?,
        Task::Classification => {
            let levels: BTreeSet<&str> = raw.iter().map(|r| r[target_col].as_str()).collect();
            let numeric: Option<Vec<f64>> = raw.iter().map(|r| r[target_col].parse::<f64>().ok()).collect();
            match numeric {
                Some(v) if v.iter().all(|&t| t == 0.0 || t == 1.0) => v,
                _ if levels.len() == 2 => {
                    let positive = *levels.iter().next_back().expect("two levels");
                    raw.iter()
                        .map(|r| if r[target_col] == positive { 1.0 } else { 0.0 })
                        .collect()
                }
                _ => {
                    return Err(ingest(format!(
                        "classification target has {} distinct values; expected 0/1 or two labels",
                        levels.len()
                    )))
                }
            }
        }
    };

    let mut data = DataSet::new(x, y, kinds, schema.task);
    data.feature_names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    data.dropped_rows = dropped;
    Ok(data)
}
