//! Path-dependent Tree SHAP: exact Shapley values of the cover-weighted
//! conditional expectation, computed in O(leaves * depth^2) per tree.

use crate::ensemble::{NodeKind, Tree};

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut [PathElement], depth: usize, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total path weight after removing element `index`, without modifying the path.
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].pweight / zero * d1 / (depth - i) as f64;
        }
    }
    total
}

struct Walk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
    /// Stacked path buffers; level `l` owns `stride` elements at `l * stride`.
    buf: Vec<PathElement>,
    stride: usize,
}

impl Walk<'_> {
    fn recurse(&mut self, node: usize, level: usize, mut depth: usize, zero: f64, one: f64, feature: Option<usize>) {
        let s = self.stride;
        if level > 0 {
            let (parent, rest) = self.buf.split_at_mut(level * s);
            rest[..depth].copy_from_slice(&parent[(level - 1) * s..(level - 1) * s + depth]);
        }
        let path = &mut self.buf[level * s..(level + 1) * s];
        extend(path, depth, zero, one, feature);

        let tree = self.tree;
        let n = &tree.nodes[node];
        match n.kind {
            NodeKind::Leaf { value } => {
                for i in 1..=depth {
                    let w = unwound_sum(path, depth, i);
                    let el = path[i];
                    let f = el.feature.expect("only the root element lacks a feature");
                    self.phi[f] += self.scale * w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
            NodeKind::Split {
                feature: split,
                threshold,
                left,
                right,
                ..
            } => {
                let (hot, cold) = if self.x[split] <= threshold { (left, right) } else { (right, left) };
                let hot_zero = tree.nodes[hot].cover / n.cover;
                let cold_zero = tree.nodes[cold].cover / n.cover;
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(split)) {
                    in_zero = path[k].zero_fraction;
                    in_one = path[k].one_fraction;
                    unwind(path, depth, k);
                    depth -= 1;
                }
                self.recurse(hot, level + 1, depth + 1, hot_zero * in_zero, in_one, Some(split));
                self.recurse(cold, level + 1, depth + 1, cold_zero * in_zero, 0.0, Some(split));
            }
        }
    }
}

/// Add `scale` times the tree's Shapley values at `x` into `phi`.
pub(crate) fn accumulate(tree: &Tree, x: &[f64], scale: f64, phi: &mut [f64]) {
    let stride = tree.depth() + 2;
    let mut walk = Walk {
        tree,
        x,
        phi,
        scale,
        buf: vec![PathElement::default(); stride * stride],
        stride,
    };
    walk.recurse(0, 0, 0, 1.0, 1.0, None);
}
