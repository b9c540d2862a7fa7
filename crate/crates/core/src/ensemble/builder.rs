//! Exact greedy CART growth shared by all ensemble families.
//!
//! Every row carries three accumulated quantities `(w, a, b)`:
//! - variance and Gini criteria: `w` = sample weight, `a = w*t`, `b = w*t^2`;
//! - second-order criterion: `w` = sample weight, `a = w*g`, `b = w*h`.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values. Rows with `w == 0` are absent from the tree.

use rand::seq::index::sample;
use rand::Rng as _;

use super::tree::{Tree, TreeNode};
use super::TieBreak;
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Criterion {
    Variance,
    Gini,
    SecondOrder { lambda: f64, min_child_hessian: f64 },
}

impl Criterion {
    /// Node score whose decrease (or, for second order, increase) drives the split.
    fn impurity(self, w: f64, a: f64, b: f64) -> f64 {
        match self {
            Criterion::Variance => b - a * a / w,
            Criterion::Gini => 2.0 * (a - a * a / w),
            Criterion::SecondOrder { lambda, .. } => a * a / (b + lambda),
        }
    }

    fn gain(self, parent: (f64, f64, f64), left: (f64, f64, f64)) -> f64 {
        let right = (parent.0 - left.0, parent.1 - left.1, parent.2 - left.2);
        let p = self.impurity(parent.0, parent.1, parent.2);
        let l = self.impurity(left.0, left.1, left.2);
        let r = self.impurity(right.0, right.1, right.2);
        match self {
            Criterion::SecondOrder { .. } => 0.5 * (l + r - p),
            _ => p - l - r,
        }
    }

    fn admissible(self, parent: (f64, f64, f64), left: (f64, f64, f64)) -> bool {
        match self {
            Criterion::SecondOrder { min_child_hessian, .. } => {
                left.2 >= min_child_hessian && parent.2 - left.2 >= min_child_hessian
            }
            _ => true,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum FeatureSampling {
    All,
    /// Draw this many candidate features at every node (random forest).
    PerNode(usize),
    /// Fixed candidate set for the whole tree (per-tree column subsampling).
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone)]
pub(crate) struct GrowSpec {
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    pub criterion: Criterion,
    pub tie_break: TieBreak,
    pub sampling: FeatureSampling,
}

/// Column-major copy of the features with every column's row order sorted
/// by (value, row index). Built once per fit.
pub(crate) struct Presorted {
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let cols: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&p, &q| c[p as usize].total_cmp(&c[q as usize]).then(p.cmp(&q)));
                idx
            })
            .collect();
        Self { cols, order }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        let o = &self.order[j];
        o.is_empty() || self.cols[j][o[0] as usize] == self.cols[j][o[o.len() - 1] as usize]
    }
}

pub(crate) struct RowStats<'a> {
    pub w: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
}

struct Best {
    gain: f64,
    position: usize,
    threshold: f64,
}

struct Builder<'a> {
    pre: &'a Presorted,
    stats: &'a RowStats<'a>,
    spec: &'a GrowSpec,
    features: Vec<usize>,
    rng: &'a mut Rng,
    leaf_value: &'a dyn Fn(&[u32]) -> f64,
    nodes: Vec<TreeNode>,
    go_left: Vec<bool>,
}

/// Grow one tree. `leaf_value` maps the rows reaching a leaf (those with
/// nonzero weight) to its output.
pub(crate) fn grow_tree(
    pre: &Presorted,
    stats: &RowStats<'_>,
    spec: &GrowSpec,
    rng: &mut Rng,
    leaf_value: &dyn Fn(&[u32]) -> f64,
) -> Tree {
    let features: Vec<usize> = match &spec.sampling {
        FeatureSampling::Fixed(f) => f.clone(),
        _ => (0..pre.n_features()).collect(),
    };
    let lists: Vec<Vec<u32>> = features
        .iter()
        .map(|&j| pre.order[j].iter().copied().filter(|&i| stats.w[i as usize] > 0.0).collect())
        .collect();
    let mut b = Builder {
        pre,
        stats,
        spec,
        features,
        rng,
        leaf_value,
        nodes: Vec::new(),
        go_left: vec![false; stats.w.len()],
    };
    b.build(lists, 0);
    Tree::new(b.nodes)
}

impl Builder<'_> {
    fn totals(&self, members: &[u32]) -> (f64, f64, f64) {
        members.iter().fold((0.0, 0.0, 0.0), |acc, &i| {
            let i = i as usize;
            (acc.0 + self.stats.w[i], acc.1 + self.stats.a[i], acc.2 + self.stats.b[i])
        })
    }

    fn is_pure(&self, members: &[u32]) -> bool {
        if let Criterion::SecondOrder { .. } = self.spec.criterion {
            return false;
        }
        let target = |i: u32| self.stats.a[i as usize] / self.stats.w[i as usize];
        let first = target(members[0]);
        members.iter().all(|&i| target(i) == first)
    }

    fn candidates(&mut self) -> Vec<usize> {
        let n = self.features.len();
        match self.spec.sampling {
            FeatureSampling::PerNode(k) if k < n => {
                let mut picked = sample(self.rng, n, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        }
    }

    fn best_in_feature(&self, position: usize, list: &[u32], parent: (f64, f64, f64)) -> Option<Best> {
        let col = &self.pre.cols[self.features[position]];
        let msl = self.spec.min_samples_leaf;
        let crit = self.spec.criterion;
        let mut left = (0.0, 0.0, 0.0);
        let mut best: Option<Best> = None;
        for k in 0..list.len().saturating_sub(1) {
            let i = list[k] as usize;
            left.0 += self.stats.w[i];
            left.1 += self.stats.a[i];
            left.2 += self.stats.b[i];
            let here = col[i];
            let next = col[list[k + 1] as usize];
            if next <= here || left.0 < msl {
                continue;
            }
            if parent.0 - left.0 < msl {
                break;
            }
            if !crit.admissible(parent, left) {
                continue;
            }
            let gain = crit.gain(parent, left);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (here + next);
                if threshold >= next {
                    threshold = here;
                }
                best = Some(Best {
                    gain,
                    position,
                    threshold,
                });
            }
        }
        best
    }

    fn find_split(&mut self, lists: &[Vec<u32>], parent: (f64, f64, f64)) -> Option<Best> {
        let candidates = self.candidates();
        let per_feature: Vec<Best> = candidates
            .into_iter()
            .filter_map(|p| self.best_in_feature(p, &lists[p], parent))
            .collect();
        let max_gain = per_feature.iter().map(|b| b.gain).fold(f64::NEG_INFINITY, f64::max);
        let scale = 1.0 + self.spec.criterion.impurity(parent.0, parent.1, parent.2).abs();
        if !(max_gain > 1e-12 * scale) {
            return None;
        }
        let mut tied: Vec<Best> = per_feature.into_iter().filter(|b| b.gain == max_gain).collect();
        let pick = match self.spec.tie_break {
            TieBreak::LowestIndex => 0,
            TieBreak::SeededRandom if tied.len() > 1 => self.rng.random_range(0..tied.len()),
            TieBreak::SeededRandom => 0,
        };
        Some(tied.swap_remove(pick))
    }

    fn build(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let parent = self.totals(&lists[0]);
        self.nodes.push(TreeNode::leaf(0.0, parent.0));

        let splittable = depth < self.spec.max_depth
            && parent.0 >= 2.0 * self.spec.min_samples_leaf
            && lists[0].len() >= 2
            && !self.is_pure(&lists[0]);
        if splittable {
            if let Some(best) = self.find_split(&lists, parent) {
                let feature = self.features[best.position];
                let col = &self.pre.cols[feature];
                for &i in &lists[0] {
                    self.go_left[i as usize] = col[i as usize] <= best.threshold;
                }
                let go_left = &self.go_left;
                let (left_lists, right_lists): (Vec<Vec<u32>>, Vec<Vec<u32>>) = lists
                    .into_iter()
                    .map(|l| l.into_iter().partition(|&i| go_left[i as usize]))
                    .unzip();
                let left = self.build(left_lists, depth + 1);
                let right = self.build(right_lists, depth + 1);
                self.nodes[id] = TreeNode::split(feature, best.threshold, left, right, best.gain.max(0.0), parent.0);
                return id;
            }
        }
        let value = (self.leaf_value)(&lists[0]);
        self.nodes[id] = TreeNode::leaf(value, parent.0);
        id
    }
}
