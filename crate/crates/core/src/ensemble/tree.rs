use serde::{Deserialize, Serialize};

/// Payload of a node: either a split or a leaf, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        impurity_decrease: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Training sample weight that reached this node.
    pub cover: f64,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            cover,
            kind: NodeKind::Leaf { value },
        }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize, impurity_decrease: f64, cover: f64) -> Self {
        Self {
            cover,
            kind: NodeKind::Split {
                feature,
                threshold,
                left,
                right,
                impurity_decrease,
            },
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Binary tree stored as an arena; the root is node 0 and every child index
/// is greater than its parent's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn new(nodes: Vec<TreeNode>) -> Self {
        Self { nodes }
    }

    pub fn single_leaf(value: f64, cover: f64) -> Self {
        Self::new(vec![TreeNode::leaf(value, cover)])
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { value } => return *value,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Cover-weighted mean leaf value: the tree's output with no feature known.
    pub fn expected_value(&self) -> f64 {
        fn go(t: &Tree, i: usize) -> f64 {
            let node = &t.nodes[i];
            match &node.kind {
                NodeKind::Leaf { value } => *value,
                NodeKind::Split { left, right, .. } => {
                    let l = &t.nodes[*left];
                    let r = &t.nodes[*right];
                    (l.cover * go(t, *left) + r.cover * go(t, *right)) / node.cover
                }
            }
        }
        go(self, 0)
    }

    /// Structural checks: child indices in range and strictly increasing,
    /// every non-root node referenced exactly once.
    pub fn check_structure(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Split { left, right, .. } = node.kind {
                for c in [left, right] {
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i} has invalid child {c}"));
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes are not a single binary tree".into());
        }
        Ok(())
    }

    /// Every cover is finite and positive.
    pub fn has_valid_covers(&self) -> bool {
        self.nodes.iter().all(|n| n.cover.is_finite() && n.cover > 0.0)
    }
}
