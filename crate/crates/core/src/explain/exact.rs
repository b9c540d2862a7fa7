//! Brute-force Shapley values by enumerating every feature subset.

use crate::ensemble::{NodeKind, Tree};

/// Largest feature count the enumeration accepts.
pub const MAX_ORACLE_FEATURES: usize = 20;

/// Cover-weighted conditional expectation of the tree given only the
/// features in `known` (bit j set = feature j observed at `x`).
pub(crate) fn conditional_expectation(tree: &Tree, x: &[f64], known: u32) -> f64 {
    fn go(tree: &Tree, x: &[f64], known: u32, i: usize) -> f64 {
        let node = &tree.nodes[i];
        match node.kind {
            NodeKind::Leaf { value } => value,
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if known >> feature & 1 == 1 {
                    go(tree, x, known, if x[feature] <= threshold { left } else { right })
                } else {
                    let wl = tree.nodes[left].cover / node.cover;
                    let wr = tree.nodes[right].cover / node.cover;
                    wl * go(tree, x, known, left) + wr * go(tree, x, known, right)
                }
            }
        }
    }
    go(tree, x, known, 0)
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Shapley values of the set function `value` over `n` players (bitmask
/// arguments), plus `value(0)`.
pub(crate) fn shapley_from_values(n: usize, value: &[f64]) -> (Vec<f64>, f64) {
    let fact = factorials(n);
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in 0..value.len() {
            if s & bit == 0 {
                *p += weight[s.count_ones() as usize] * (value[s | bit] - value[s]);
            }
        }
    }
    (phi, value[0])
}
