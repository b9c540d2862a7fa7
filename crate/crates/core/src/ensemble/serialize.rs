//! Line-oriented text format for fitted ensembles.
//!
//! ```text
//! treetrust-model 1
//! family xgb
//! task classification
//! n_features 5
//! base_score 0.0
//! learning_rate 0.3
//! tree 0
//! id,parent,side,feature,threshold,leaf_value,cover,impurity_decrease
//! 0,-1,root,2,0.5,,300,12.5
//! 1,0,L,,,0.71,140,
//! 2,0,R,,,-0.4,160,
//! ```
//!
//! Floats are written in shortest round-trip form, so a reload is exact.
//! An empty `cover` field loads as NaN and is rejected by the explainers.

use std::fmt::Write as _;

use thiserror::Error;

use super::tree::{NodeKind, Tree, TreeNode};
use super::Ensemble;
use crate::data::Task;

const MAGIC: &str = "treetrust-model 1";
const COLUMNS: &str = "id,parent,side,feature,threshold,leaf_value,cover,impurity_decrease";

#[derive(Debug, Error, PartialEq)]
#[error("model file line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_text(model: &Ensemble) -> String {
    let mut out = String::new();
    let task = match model.task {
        Task::Classification => "classification",
        Task::Regression => "regression",
    };
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "family {}", model.family).unwrap();
    writeln!(out, "task {task}").unwrap();
    writeln!(out, "n_features {}", model.n_features).unwrap();
    writeln!(out, "base_score {}", model.base_score).unwrap();
    writeln!(out, "learning_rate {}", model.learning_rate).unwrap();
    for (t, tree) in model.trees.iter().enumerate() {
        writeln!(out, "tree {t}").unwrap();
        writeln!(out, "{COLUMNS}").unwrap();
        let mut parent: Vec<(i64, &str)> = vec![(-1, "root"); tree.nodes.len()];
        for (i, node) in tree.nodes.iter().enumerate() {
            if let NodeKind::Split { left, right, .. } = node.kind {
                parent[left] = (i as i64, "L");
                parent[right] = (i as i64, "R");
            }
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            let (p, side) = parent[i];
            let cover = if node.cover.is_nan() { String::new() } else { node.cover.to_string() };
            match node.kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    impurity_decrease,
                    ..
                } => writeln!(out, "{i},{p},{side},{feature},{threshold},,{cover},{impurity_decrease}").unwrap(),
                NodeKind::Leaf { value } => {
                    writeln!(out, "{i},{p},{side},,,{},{cover},", fmt_opt(Some(value))).unwrap()
                }
            }
        }
    }
    out
}

struct RawNode {
    parent: i64,
    side: String,
    feature: Option<usize>,
    threshold: Option<f64>,
    leaf_value: Option<f64>,
    cover: f64,
    impurity_decrease: Option<f64>,
}

fn finish_tree(raw: Vec<RawNode>, line: usize) -> Result<Tree, ParseError> {
    let err = |message: String| ParseError { line, message };
    let n = raw.len();
    if n == 0 {
        return Err(err("tree without nodes".into()));
    }
    let mut children = vec![(None, None); n];
    for (i, r) in raw.iter().enumerate() {
        if i == 0 {
            if r.parent != -1 {
                return Err(err("first node must be the root".into()));
            }
            continue;
        }
        let p = usize::try_from(r.parent).ok().filter(|&p| p < i).ok_or_else(|| err(format!("node {i}: bad parent {}", r.parent)))?;
        let slot = match r.side.as_str() {
            "L" => &mut children[p].0,
            "R" => &mut children[p].1,
            s => return Err(err(format!("node {i}: bad side `{s}`"))),
        };
        if slot.replace(i).is_some() {
            return Err(err(format!("node {p} has two {} children", r.side)));
        }
    }
    let mut nodes = Vec::with_capacity(n);
    for (i, r) in raw.into_iter().enumerate() {
        let kind = match (r.feature, children[i]) {
            (Some(feature), (Some(left), Some(right))) => NodeKind::Split {
                feature,
                threshold: r.threshold.ok_or_else(|| err(format!("node {i}: split without threshold")))?,
                left,
                right,
                impurity_decrease: r.impurity_decrease.unwrap_or(0.0),
            },
            (None, (None, None)) => NodeKind::Leaf {
                value: r.leaf_value.ok_or_else(|| err(format!("node {i}: leaf without value")))?,
            },
            _ => return Err(err(format!("node {i}: split fields and children disagree"))),
        };
        nodes.push(TreeNode { cover: r.cover, kind });
    }
    let tree = Tree::new(nodes);
    tree.check_structure().map_err(err)?;
    Ok(tree)
}

pub fn from_text(text: &str) -> Result<Ensemble, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: &str| ParseError {
        line,
        message: message.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((n, _)) => return Err(err(n, "not a treetrust model file")),
        None => return Err(err(0, "empty model file")),
    }
    let mut header = |key: &str| -> Result<(usize, String), ParseError> {
        let (n, l) = lines.next().ok_or_else(|| err(0, "truncated header"))?;
        let value = l
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| err(n, &format!("expected `{key} <value>`")))?;
        Ok((n, value.trim().to_string()))
    };
    let (n, family) = header("family")?;
    let family = family.parse().map_err(|e: String| err(n, &e))?;
    let (n, task) = header("task")?;
    let task = match task.as_str() {
        "classification" => Task::Classification,
        "regression" => Task::Regression,
        _ => return Err(err(n, "task must be classification or regression")),
    };
    let (n, nf) = header("n_features")?;
    let n_features = nf.parse().map_err(|_| err(n, "bad n_features"))?;
    let (n, bs) = header("base_score")?;
    let base_score = bs.parse().map_err(|_| err(n, "bad base_score"))?;
    let (n, lr) = header("learning_rate")?;
    let learning_rate = lr.parse().map_err(|_| err(n, "bad learning_rate"))?;

    let mut trees = Vec::new();
    let mut current: Option<Vec<RawNode>> = None;
    let mut last_line = 0;
    for (n, l) in lines {
        last_line = n;
        if l.starts_with("tree ") {
            if let Some(raw) = current.take() {
                trees.push(finish_tree(raw, n)?);
            }
            current = Some(Vec::new());
            continue;
        }
        if l == COLUMNS {
            continue;
        }
        let raw = current.as_mut().ok_or_else(|| err(n, "node line before any `tree` line"))?;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 8 {
            return Err(err(n, "expected 8 comma-separated fields"));
        }
        let opt_f64 = |s: &str| -> Result<Option<f64>, ParseError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(n, &format!("bad number `{s}`")))
            }
        };
        let id: usize = f[0].parse().map_err(|_| err(n, "bad node id"))?;
        if id != raw.len() {
            return Err(err(n, "node ids must be consecutive from 0"));
        }
        raw.push(RawNode {
            parent: f[1].parse().map_err(|_| err(n, "bad parent id"))?,
            side: f[2].to_string(),
            feature: if f[3].is_empty() {
                None
            } else {
                Some(f[3].parse().map_err(|_| err(n, "bad feature index"))?)
            },
            threshold: opt_f64(f[4])?,
            leaf_value: opt_f64(f[5])?,
            cover: opt_f64(f[6])?.unwrap_or(f64::NAN),
            impurity_decrease: opt_f64(f[7])?,
        });
    }
    if let Some(raw) = current.take() {
        trees.push(finish_tree(raw, last_line)?);
    }
    if trees.is_empty() {
        return Err(err(last_line, "model has no trees"));
    }
    Ok(Ensemble {
        trees,
        base_score,
        learning_rate,
        family,
        task,
        n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Family;

    fn stump() -> Ensemble {
        Ensemble {
            trees: vec![Tree::new(vec![
                TreeNode::split(1, 0.25, 1, 2, 3.5, 10.0),
                TreeNode::leaf(-1.0 / 3.0, 4.0),
                TreeNode::leaf(2.0, 6.0),
            ])],
            base_score: 0.1,
            learning_rate: 0.3,
            family: Family::SecondOrderBoosting,
            task: Task::Classification,
            n_features: 3,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = stump();
        let text = to_text(&m);
        assert!(text.contains("0,-1,root,1,0.25,,10,3.5"));
        assert_eq!(from_text(&text).unwrap(), m);
    }

    #[test]
    fn missing_cover_loads_as_nan() {
        let text = to_text(&stump()).replace("1,0,L,,,-0.3333333333333333,4,", "1,0,L,,,-0.3333333333333333,,");
        let m = from_text(&text).unwrap();
        assert!(m.trees[0].nodes[1].cover.is_nan());
        assert!(!m.trees[0].has_valid_covers());
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(from_text("").is_err());
        assert!(from_text("hello").is_err());
        let text = to_text(&stump());
        assert!(from_text(&text.replace("2,0,R", "2,0,L")).is_err());
        assert!(from_text(&text.replace(",3.5", ",x")).is_err());
        let truncated: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert!(from_text(&truncated).is_err());
    }
}
