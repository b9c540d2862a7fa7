//! Aggregation and serialization of experiment records.
//!
//! Three artifacts per audit: a per-iteration CSV (enough to recompute
//! every aggregate), an aggregate JSON with sorted keys, and a long-format
//! CSV for plotting.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentKind, HarnessError, IterationRecord};
use crate::data::NoiseLevel;
use crate::ensemble::Family;
use crate::metrics::{CorrelationPair, RankCategory};

/// Identity of one report cell in a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub experiment: ExperimentKind,
    pub family: Family,
    pub n_features: usize,
    pub noise: NoiseLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub count: usize,
    /// Entries skipped because the value was undefined.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProportion {
    pub rank: usize,
    pub correct: f64,
    pub incorrect_but_top: f64,
    pub incorrect: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_iterations: usize,
    pub columns: BTreeMap<String, ColumnSummary>,
    pub rank_proportions: BTreeMap<String, Vec<RankProportion>>,
    pub mean_importance: BTreeMap<String, Vec<f64>>,
    /// Per feature, how many iterations gave it the largest score (all-zero
    /// vectors are skipped).
    pub argmax_counts: BTreeMap<String, Vec<usize>>,
    pub sanity_flagged: Vec<usize>,
    pub tie_iterations: Vec<usize>,
}

impl Aggregates {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.get(name)
    }

    /// Mean of a column, if defined.
    pub fn mean(&self, name: &str) -> Option<f64> {
        self.columns.get(name).and_then(|c| c.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub key: CellKey,
    pub config: ExperimentConfig,
    pub records: Vec<IterationRecord>,
    pub aggregates: Aggregates,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, records: Vec<IterationRecord>) -> Self {
        let n_features = records.first().map_or(0, |r| r.gain_importance.len());
        Self {
            key: CellKey {
                experiment: config.experiment,
                family: config.family,
                n_features,
                noise: config.noise,
            },
            config: config.clone(),
            aggregates: aggregate(&records),
            records,
        }
    }
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> Option<ColumnSummary> {
    let mut seen = 0;
    let defined: Vec<f64> = values
        .inspect(|_| seen += 1)
        .flatten()
        .filter(|v| v.is_finite())
        .collect();
    if seen == 0 {
        return None;
    }
    let count = defined.len();
    let (mean, std) = if count == 0 {
        (None, None)
    } else {
        let m = defined.iter().sum::<f64>() / count as f64;
        let var = defined.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / count as f64;
        (Some(m), Some(var.sqrt()))
    };
    Some(ColumnSummary {
        mean,
        std,
        count,
        excluded: seen - count,
    })
}

fn rank_proportions(outcomes: &[&Vec<RankCategory>]) -> Vec<RankProportion> {
    let k = outcomes.iter().map(|o| o.len()).max().unwrap_or(0);
    (0..k)
        .map(|r| {
            let at: Vec<RankCategory> = outcomes.iter().filter_map(|o| o.get(r).copied()).collect();
            let n = at.len();
            let count = |c: RankCategory| at.iter().filter(|&&x| x == c).count() as f64;
            let correct = count(RankCategory::Correct) / n as f64;
            let incorrect_but_top = count(RankCategory::IncorrectButTop) / n as f64;
            RankProportion {
                rank: r + 1,
                correct,
                incorrect_but_top,
                // Complement, so the three proportions sum to one.
                incorrect: 1.0 - (correct + incorrect_but_top),
                n,
            }
        })
        .collect()
}

fn argmax(v: &[f64]) -> Option<usize> {
    if v.iter().all(|&s| s == 0.0) {
        return None;
    }
    let mut best = 0;
    for (j, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = j;
        }
    }
    Some(best)
}

/// Summaries of a run's records: per-column mean/std with undefined
/// entries excluded and counted, rank-category proportions, importance
/// means and argmax histograms, and the flagged iterations.
pub fn aggregate(records: &[IterationRecord]) -> Aggregates {
    let mut columns = BTreeMap::new();
    let mut put = |name: &str, s: Option<ColumnSummary>| {
        if let Some(s) = s {
            columns.insert(name.to_string(), s);
        }
    };
    put("gain_spearman", summarize(records.iter().map(|r| r.gain_corr.spearman)));
    put("gain_pearson", summarize(records.iter().map(|r| r.gain_corr.pearson)));
    put("shap_spearman", summarize(records.iter().map(|r| r.shap_corr.spearman)));
    put("shap_pearson", summarize(records.iter().map(|r| r.shap_corr.pearson)));
    put(
        "prediction_spearman",
        summarize(records.iter().filter_map(|r| r.prediction_corr.map(|p| p.spearman))),
    );
    put(
        "prediction_pearson",
        summarize(records.iter().filter_map(|r| r.prediction_corr.map(|p| p.pearson))),
    );
    put("model_metric", summarize(records.iter().map(|r| r.model_metric)));

    let mut rank = BTreeMap::new();
    let gain: Vec<&Vec<RankCategory>> = records.iter().map(|r| &r.rank_outcomes_gain).collect();
    let shap: Vec<&Vec<RankCategory>> = records.iter().map(|r| &r.rank_outcomes_shap).collect();
    rank.insert("gain".to_string(), rank_proportions(&gain));
    rank.insert("shap".to_string(), rank_proportions(&shap));

    let d = records.first().map_or(0, |r| r.gain_importance.len());
    let mut mean_importance = BTreeMap::new();
    let mut argmax_counts = BTreeMap::new();
    for (name, pick) in [("gain", 0), ("shap", 1)] {
        let vec_of = |r: &IterationRecord| if pick == 0 { r.gain_importance.clone() } else { r.shap_importance.clone() };
        let mut mean = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for r in records {
            let v = vec_of(r);
            for (m, s) in mean.iter_mut().zip(&v) {
                *m += s;
            }
            if let Some(j) = argmax(&v) {
                if j < d {
                    counts[j] += 1;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= records.len().max(1) as f64);
        mean_importance.insert(name.to_string(), mean);
        argmax_counts.insert(name.to_string(), counts);
    }

    Aggregates {
        n_iterations: records.len(),
        columns,
        rank_proportions: rank,
        mean_importance,
        argmax_counts,
        sanity_flagged: records.iter().filter(|r| r.sanity_flag).map(|r| r.iteration).collect(),
        tie_iterations: records.iter().filter(|r| r.ties).map(|r| r.iteration).collect(),
    }
}

const HEADER: [&str; 19] = [
    "experiment",
    "family",
    "n_features",
    "noise",
    "iteration",
    "seed",
    "gain_spearman",
    "gain_pearson",
    "shap_spearman",
    "shap_pearson",
    "prediction_spearman",
    "prediction_pearson",
    "model_metric",
    "sanity_flag",
    "ties",
    "rank_gain",
    "rank_shap",
    "gain_importance",
    "shap_importance",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn codes(v: &[RankCategory]) -> String {
    v.iter().map(|c| c.code().to_string()).collect::<Vec<_>>().join(";")
}

fn io_err(e: csv::Error) -> HarnessError {
    HarnessError::Report(e.to_string())
}

/// Per-iteration CSV for every cell of a sweep.
pub fn write_iterations_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(io_err)?;
    for rep in reports {
        for r in &rep.records {
            let pred = r.prediction_corr;
            w.write_record([
                rep.key.experiment.to_string(),
                rep.key.family.to_string(),
                rep.key.n_features.to_string(),
                rep.key.noise.to_string(),
                r.iteration.to_string(),
                r.seed.to_string(),
                num(r.gain_corr.spearman),
                num(r.gain_corr.pearson),
                num(r.shap_corr.spearman),
                num(r.shap_corr.pearson),
                pred.map(|p| num(p.spearman)).unwrap_or_default(),
                pred.map(|p| num(p.pearson)).unwrap_or_default(),
                num(r.model_metric),
                r.sanity_flag.to_string(),
                r.ties.to_string(),
                codes(&r.rank_outcomes_gain),
                codes(&r.rank_outcomes_shap),
                joined(&r.gain_importance),
                joined(&r.shap_importance),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::Report(e.to_string()))?;
    Ok(())
}

fn parse_opt(field: &str, line: u64) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| HarnessError::Report(format!("line {line}: bad number `{field}`")))
}

fn parse_vec(field: &str, line: u64) -> Result<Vec<f64>, HarnessError> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|s| parse_opt(s, line).map(|v| v.unwrap_or(f64::NAN)))
        .collect()
}

fn parse_codes(field: &str, line: u64) -> Result<Vec<RankCategory>, HarnessError> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|s| {
            let mut chars = s.chars();
            match (chars.next().and_then(RankCategory::from_code), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(HarnessError::Report(format!("line {line}: bad rank code `{s}`"))),
            }
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T, HarnessError> {
    field
        .parse()
        .map_err(|_| HarnessError::Report(format!("line {line}: bad {what} `{field}`")))
}

fn parse_bool(field: &str, line: u64) -> Result<bool, HarnessError> {
    match field {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(HarnessError::Report(format!("line {line}: bad flag `{field}`"))),
    }
}

/// Read a per-iteration CSV back into cells, in order of first appearance.
pub fn read_iterations_csv<R: Read>(input: R) -> Result<Vec<(CellKey, Vec<IterationRecord>)>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(io_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Report("unexpected per-iteration CSV header".into()));
    }
    let mut cells: Vec<(CellKey, Vec<IterationRecord>)> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(io_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let f = |i: usize| row.get(i).unwrap_or("");
        let key = CellKey {
            experiment: parse_field(f(0), "experiment", line)?,
            family: parse_field(f(1), "family", line)?,
            n_features: parse_field(f(2), "n_features", line)?,
            noise: parse_field(f(3), "noise", line)?,
        };
        let pred = match (f(10), f(11)) {
            ("", "") if key.experiment.is_paired() => Some(CorrelationPair::default()),
            ("", "") => None,
            (s, p) => Some(CorrelationPair {
                spearman: parse_opt(s, line)?,
                pearson: parse_opt(p, line)?,
            }),
        };
        let rec = IterationRecord {
            iteration: parse_field(f(4), "iteration", line)?,
            seed: parse_field(f(5), "seed", line)?,
            gain_corr: CorrelationPair {
                spearman: parse_opt(f(6), line)?,
                pearson: parse_opt(f(7), line)?,
            },
            shap_corr: CorrelationPair {
                spearman: parse_opt(f(8), line)?,
                pearson: parse_opt(f(9), line)?,
            },
            prediction_corr: pred,
            model_metric: parse_opt(f(12), line)?,
            sanity_flag: parse_bool(f(13), line)?,
            ties: parse_bool(f(14), line)?,
            rank_outcomes_gain: parse_codes(f(15), line)?,
            rank_outcomes_shap: parse_codes(f(16), line)?,
            gain_importance: parse_vec(f(17), line)?,
            shap_importance: parse_vec(f(18), line)?,
        };
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, recs)) => recs.push(rec),
            None => cells.push((key, vec![rec])),
        }
    }
    Ok(cells)
}

/// Aggregate JSON for a sweep: `{"cells": [{"key": .., "aggregates": ..}]}`
/// with every object's keys sorted.
pub fn aggregate_json<'a>(cells: impl IntoIterator<Item = (&'a CellKey, &'a Aggregates)>) -> String {
    let cells: Vec<serde_json::Value> = cells
        .into_iter()
        .map(|(key, agg)| serde_json::json!({ "key": key, "aggregates": agg }))
        .collect();
    // serde_json's default map is ordered by key.
    let value = serde_json::json!({ "cells": cells });
    let mut s = serde_json::to_string_pretty(&value).expect("aggregates serialize");
    s.push('\n');
    s
}

/// Long-format CSV: one row per (iteration, correlation series).
pub fn write_plot_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "family", "method", "noise", "n_features", "iteration", "correlation"])
        .map_err(io_err)?;
    for rep in reports {
        for r in &rep.records {
            let series = [
                ("gain", r.gain_corr.spearman),
                ("shap", r.shap_corr.spearman),
                ("prediction", r.prediction_corr.and_then(|p| p.spearman)),
            ];
            for (method, value) in series {
                if let Some(v) = value {
                    w.write_record([
                        rep.key.experiment.to_string(),
                        rep.key.family.to_string(),
                        method.to_string(),
                        rep.key.noise.to_string(),
                        rep.key.n_features.to_string(),
                        r.iteration.to_string(),
                        format!("{v:?}"),
                    ])
                    .map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| HarnessError::Report(e.to_string()))?;
    Ok(())
}
