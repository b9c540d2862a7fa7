//! The `treetrust` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error
//! (missing or malformed files, shape mismatches), 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{self, generate_synthetic, load_csv, ColumnRole, DataError, FeatureKind, NoiseLevel, Schema, SyntheticSpec, Task};
use crate::ensemble::{fit, serialize, Family, FitError, HyperParams};
use crate::explain::{gain_importance, shap_global, tree_shap_matrix, write_importance_csv, ExplainError};
use crate::harness::report::{aggregate_json, read_iterations_csv, write_iterations_csv, write_plot_csv};
use crate::harness::{self, AuditFile, ExperimentReport, HarnessError};
use crate::rng::{self, Stream};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Config(m),
            HarnessError::Data(_) | HarnessError::Io { .. } | HarnessError::Report(_) => CliError::Data(e.to_string()),
            HarnessError::Fit(FitError::InvalidParams(_)) => CliError::Config(e.to_string()),
            HarnessError::Fit(FitError::ShapeMismatch { .. }) => CliError::Data(e.to_string()),
            HarnessError::Fit(_) | HarnessError::Explain(_) | HarnessError::Metric(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        HarnessError::Fit(e).into()
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::ShapeMismatch { .. } | ExplainError::EmptyInput | ExplainError::MissingCover { .. } => {
                CliError::Data(e.to_string())
            }
            ExplainError::TooManyFeatures(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "treetrust", version, about = "Train tree ensembles and audit their feature importances")]
pub struct Cli {
    /// Worker threads (default: logical core count).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its true coefficients.
    Simulate(SimulateArgs),
    /// Run the experiments described by a config file.
    Audit(AuditArgs),
    /// Fit one model to a CSV file and save it.
    Train(TrainArgs),
    /// Gain and Tree SHAP importances of a saved model.
    Explain(ExplainArgs),
    /// Recompute aggregate JSON from a per-iteration CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Root seed; falls back to TREETRUST_SEED, then 0.
    #[arg(long, env = "TREETRUST_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "none")]
    pub noise: NoiseLevel,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "audit-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub noise: Option<NoiseLevel>,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Headed CSV file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, default_value = "classification")]
    pub task: String,
    /// Columns to read as categorical (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, default_value = "xgb")]
    pub family: Family,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Column to ignore as the label, if present.
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Also write per-row attributions.
    #[arg(long)]
    pub local: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-iteration CSV written by `audit`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    config_path: String,
    out_dir: String,
    root_seed: u64,
    tool_version: &'static str,
    timestamp_unix: u64,
    workers: Option<usize>,
    cells: &'a [harness::ExperimentConfig],
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn task_of(s: &str) -> Result<Task, CliError> {
    match s {
        "classification" => Ok(Task::Classification),
        "regression" => Ok(Task::Regression),
        other => Err(CliError::Config(format!("unknown task `{other}` (classification|regression)"))),
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let seed = args.seed.seed.unwrap_or(0);
    let (mut data, coef) = generate_synthetic(&SyntheticSpec::new(args.n, args.d, seed))?;
    if args.noise != NoiseLevel::None {
        data = data::add_noise(&data, args.noise, rng::derive(seed, Stream::Noise));
    }
    create_dir(&args.out)?;
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());

    let mut w = csv::Writer::from_writer(create(&args.out.join("data.csv"))?);
    let mut header = data.feature_names.clone();
    header.push("y".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, y) in data.x.iter_rows().zip(&data.y) {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        fields.push(format!("{y:?}"));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;

    let mut w = csv::Writer::from_writer(create(&args.out.join("coefficients.csv"))?);
    w.write_record(["feature_index", "feature_name", "coefficient", "kind", "threshold"])
        .map_err(csv_err)?;
    for (j, c) in coef.iter().enumerate() {
        let (kind, thr) = match data.kinds[j] {
            FeatureKind::Continuous => ("continuous", String::new()),
            FeatureKind::Categorical { threshold } => ("categorical", threshold.map(|t| format!("{t:?}")).unwrap_or_default()),
        };
        w.write_record([j.to_string(), data.feature_names[j].clone(), format!("{c:?}"), kind.into(), thr])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn audit(args: &AuditArgs, workers: Option<usize>) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut file = AuditFile::parse(&text)?;
    if let Some(seed) = args.seed.seed {
        file.root_seed = Some(seed);
    }
    if let Some(noise) = args.noise {
        file.noise = harness::config::OneOrMany::One(noise);
    }
    if let Some(family) = args.family {
        file.family = harness::config::OneOrMany::One(family);
    }
    if let Some(iters) = args.iters {
        file.n_iterations = Some(iters);
    }
    if let Some(k) = args.k {
        file.k = k;
    }
    let cells = file.expand(0)?;
    create_dir(&args.out)?;
    let manifest = RunManifest {
        config_path: args.config.display().to_string(),
        out_dir: args.out.display().to_string(),
        root_seed: cells[0].root_seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        workers,
        cells: &cells,
    };
    let text = serde_json::to_string_pretty(&serde_json::to_value(&manifest).expect("manifest serializes"))
        .expect("manifest serializes");
    write(&args.out.join("manifest.json"), text + "\n")?;

    let reports = cells
        .iter()
        .map(harness::run)
        .collect::<Result<Vec<ExperimentReport>, _>>()?;
    write_iterations_csv(create(&args.out.join("iterations.csv"))?, &reports)?;
    write_plot_csv(create(&args.out.join("plot.csv"))?, &reports)?;
    let json = aggregate_json(reports.iter().map(|r| (&r.key, &r.aggregates)));
    write(&args.out.join("aggregate.json"), json)?;
    for r in &reports {
        if !r.aggregates.sanity_flagged.is_empty() {
            eprintln!(
                "warning: {} {} d={} noise={}: {} iteration(s) with prediction correlation below {}",
                r.key.experiment,
                r.key.family,
                r.key.n_features,
                r.key.noise,
                r.aggregates.sanity_flagged.len(),
                r.config.sanity_threshold
            );
        }
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let mut schema = Schema::new(task_of(&args.task)?).with(&args.target, ColumnRole::Target);
    for c in &args.categorical {
        schema = schema.with(c, ColumnRole::Categorical);
    }
    let data = load_csv(&args.data, &schema)?;
    let mut params = HyperParams::defaults_for(args.family, data.n_features()).with_seed(args.seed.seed.unwrap_or(0));
    if let Some(t) = args.n_trees {
        params.n_trees = t;
    }
    if let Some(d) = args.max_depth {
        params.max_depth = d;
    }
    let model = fit(&data, &params, args.family)?;
    write(&args.out, serialize::to_text(&model))
}

fn explain(args: &ExplainArgs) -> Result<(), CliError> {
    let model = serialize::from_text(&read(&args.model)?).map_err(|e| CliError::Data(e.to_string()))?;
    let header = csv::Reader::from_path(&args.data)
        .and_then(|mut r| r.headers().cloned())
        .map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    if !header.iter().any(|h| h.trim() == args.target) {
        return explain_unlabelled(args, &model);
    }
    let data = load_csv(&args.data, &Schema::new(model.task).with(&args.target, ColumnRole::Target))?;
    explain_matrix(args, &model, &data.x, &data.feature_names)
}

/// Every column is a feature; values must all be numeric.
fn explain_unlabelled(args: &ExplainArgs, model: &crate::ensemble::Ensemble) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(&args.data).map_err(|e| CliError::Data(e.to_string()))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| CliError::Data(format!("non-numeric value `{f}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    explain_matrix(args, model, &crate::matrix::Matrix::from_rows(&rows), &names)
}

fn explain_matrix(
    args: &ExplainArgs,
    model: &crate::ensemble::Ensemble,
    x: &crate::matrix::Matrix,
    names: &[String],
) -> Result<(), CliError> {
    if x.cols() != model.n_features {
        return Err(CliError::Data(format!(
            "model expects {} features, data has {}",
            model.n_features,
            x.cols()
        )));
    }
    let gain = gain_importance(model, true);
    let shap = shap_global(model, x)?;
    create_dir(&args.out)?;
    write_importance_csv(create(&args.out.join("importance.csv"))?, names, &[&gain, &shap])
        .map_err(|e| CliError::Data(e.to_string()))?;
    if args.local {
        let locals = tree_shap_matrix(model, x)?;
        let mut w = csv::Writer::from_writer(create(&args.out.join("local.csv"))?);
        let mut header = vec!["row".to_string(), "base".to_string()];
        header.extend(names.iter().map(|n| format!("phi_{n}")));
        header.push("prediction".into());
        w.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
        for (i, a) in locals.iter().enumerate() {
            let mut rec = vec![i.to_string(), format!("{:?}", a.base)];
            rec.extend(a.phi.iter().map(|p| format!("{p:?}")));
            rec.push(format!("{:?}", model.predict_row(x.row(i))));
            w.write_record(&rec).map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    let file = fs::File::open(&args.input).map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.input.display())))?;
    let cells = read_iterations_csv(file)?;
    if cells.is_empty() {
        return Err(CliError::Data("per-iteration CSV has no records".into()));
    }
    let aggregated: Vec<_> = cells.iter().map(|(k, recs)| (k, harness::aggregate(recs))).collect();
    create_dir(&args.out)?;
    write(&args.out.join("aggregate.json"), aggregate_json(aggregated.iter().map(|(k, a)| (*k, a))))
}

/// Run one parsed invocation.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Audit(a) => audit(a, cli.workers),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain(a),
        Command::Report(a) => report(a),
    })
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("treetrust: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_with_args(std::env::args_os())
}
