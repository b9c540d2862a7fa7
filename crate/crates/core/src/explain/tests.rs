use proptest::prelude::*;

use super::*;
use crate::data::Task;
use crate::ensemble::{Family, Tree, TreeNode};

fn model(trees: Vec<Tree>, family: Family, d: usize) -> Ensemble {
    Ensemble {
        trees,
        base_score: 0.0,
        learning_rate: if family == Family::RandomForest { 1.0 } else { 0.5 },
        family,
        task: Task::Regression,
        n_features: d,
    }
}

fn stump(feature: usize, thr: f64, lo: f64, hi: f64, cl: f64, cr: f64) -> Tree {
    Tree::new(vec![
        TreeNode::split(feature, thr, 1, 2, 3.0, cl + cr),
        TreeNode::leaf(lo, cl),
        TreeNode::leaf(hi, cr),
    ])
}

fn depth_two() -> Tree {
    Tree::new(vec![
        TreeNode::split(0, 0.5, 1, 4, 5.0, 10.0),
        TreeNode::split(1, 0.3, 2, 3, 1.5, 6.0),
        TreeNode::leaf(1.0, 2.0),
        TreeNode::leaf(4.0, 4.0),
        TreeNode::split(1, 0.7, 5, 6, 2.5, 4.0),
        TreeNode::leaf(-2.0, 1.0),
        TreeNode::leaf(6.0, 3.0),
    ])
}

#[test]
fn gain_single_split_normalized() {
    let m = model(vec![stump(2, 0.5, 0.0, 1.0, 1.0, 1.0)], Family::GradientBoosting, 5);
    let g = gain_importance(&m, true);
    assert_eq!(g.scores, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(g.method, Method::Gain);
}

#[test]
fn gain_is_idempotent_under_duplicate_trees() {
    let one = model(vec![depth_two()], Family::GradientBoosting, 2);
    let two = model(vec![depth_two(), depth_two()], Family::GradientBoosting, 2);
    assert_eq!(gain_importance(&one, false), gain_importance(&two, false));
}

#[test]
fn gain_matches_independent_walk_on_depth_three_tree() {
    let tree = Tree::new(vec![
        TreeNode::split(0, 0.5, 1, 8, 4.0, 16.0),
        TreeNode::split(1, 0.5, 2, 5, 2.0, 8.0),
        TreeNode::split(2, 0.5, 3, 4, 0.5, 4.0),
        TreeNode::leaf(0.0, 2.0),
        TreeNode::leaf(1.0, 2.0),
        TreeNode::split(0, 0.2, 6, 7, 0.25, 4.0),
        TreeNode::leaf(2.0, 2.0),
        TreeNode::leaf(3.0, 2.0),
        TreeNode::split(2, 0.8, 9, 10, 1.0, 8.0),
        TreeNode::leaf(4.0, 4.0),
        TreeNode::leaf(5.0, 4.0),
    ]);
    // Recursive walk from the root, independent of arena order.
    fn walk(t: &Tree, i: usize, acc: &mut [f64]) {
        if let NodeKind::Split {
            feature,
            left,
            right,
            impurity_decrease,
            ..
        } = t.nodes[i].kind
        {
            acc[feature] += impurity_decrease;
            walk(t, left, acc);
            walk(t, right, acc);
        }
    }
    let mut acc = vec![0.0; 3];
    walk(&tree, 0, &mut acc);
    let g = gain_importance(&model(vec![tree], Family::GradientBoosting, 3), false);
    assert_eq!(g.scores, acc);
    assert_eq!(acc, vec![4.25, 2.0, 1.5]);
}

#[test]
fn stump_ensembles_flag_all_zero_gain() {
    let m = model(vec![Tree::single_leaf(1.0, 5.0)], Family::GradientBoosting, 3);
    let g = gain_importance(&m, true);
    assert!(g.is_all_zero());
}

#[test]
fn single_leaf_attribution_is_zero() {
    let mut m = model(vec![Tree::single_leaf(2.0, 5.0)], Family::GradientBoosting, 3);
    m.base_score = 1.0;
    for a in [tree_shap_local(&m, &[0.1, 0.2, 0.3]).unwrap(), exact_shapley_oracle(&m, &[0.1, 0.2, 0.3]).unwrap()] {
        assert_eq!(a.phi, vec![0.0; 3]);
        assert_eq!(a.base, 2.0);
    }
}

#[test]
fn single_split_puts_everything_on_its_feature() {
    let m = model(vec![stump(1, 0.5, -1.0, 3.0, 1.0, 3.0)], Family::RandomForest, 3);
    let x = [0.9, 0.2, 0.9];
    let mean = (1.0 * -1.0 + 3.0 * 3.0) / 4.0;
    for a in [tree_shap_local(&m, &x).unwrap(), exact_shapley_oracle(&m, &x).unwrap()] {
        assert!((a.base - mean).abs() < 1e-15);
        assert!((a.phi[1] - (-1.0 - mean)).abs() < 1e-15);
        assert_eq!(a.phi[0], 0.0);
        assert_eq!(a.phi[2], 0.0);
    }
}

#[test]
fn depth_two_tree_matches_oracle_and_hand_values() {
    let m = model(vec![depth_two()], Family::RandomForest, 2);
    let x = [0.4, 0.5];
    // Subset values by hand, following x on known features and cover
    // weights elsewhere.
    let f_empty = (2.0 * 1.0 + 4.0 * 4.0 + 1.0 * -2.0 + 3.0 * 6.0) / 10.0;
    let f0 = (2.0 * 1.0 + 4.0 * 4.0) / 6.0;
    let f1 = 0.6 * 4.0 + 0.4 * -2.0;
    let f01 = 4.0;
    let phi0 = 0.5 * (f0 - f_empty) + 0.5 * (f01 - f1);
    let phi1 = 0.5 * (f1 - f_empty) + 0.5 * (f01 - f0);
    let fast = tree_shap_local(&m, &x).unwrap();
    let slow = exact_shapley_oracle(&m, &x).unwrap();
    for a in [&fast, &slow] {
        assert!((a.base - f_empty).abs() < 1e-12);
        assert!((a.phi[0] - phi0).abs() < 1e-12, "{:?}", a.phi);
        assert!((a.phi[1] - phi1).abs() < 1e-12, "{:?}", a.phi);
    }
}

#[test]
fn oracle_is_symmetric_for_duplicate_features() {
    // Mirror-image tree: splitting on 0 then 1 equals splitting on 1 then 0.
    let t = Tree::new(vec![
        TreeNode::split(0, 0.5, 1, 4, 1.0, 8.0),
        TreeNode::split(1, 0.5, 2, 3, 1.0, 4.0),
        TreeNode::leaf(0.0, 2.0),
        TreeNode::leaf(1.0, 2.0),
        TreeNode::split(1, 0.5, 5, 6, 1.0, 4.0),
        TreeNode::leaf(1.0, 2.0),
        TreeNode::leaf(3.0, 2.0),
    ]);
    let m = model(vec![t], Family::RandomForest, 3);
    for v in [0.2, 0.8] {
        let a = exact_shapley_oracle(&m, &[v, v, 0.0]).unwrap();
        assert!((a.phi[0] - a.phi[1]).abs() < 1e-15, "{:?}", a.phi);
    }
}

#[test]
fn missing_covers_demand_refit() {
    let mut t = stump(0, 0.5, 0.0, 1.0, 1.0, 1.0);
    t.nodes[1].cover = f64::NAN;
    let m = model(vec![t], Family::GradientBoosting, 1);
    let err = tree_shap_local(&m, &[0.3]).unwrap_err();
    assert_eq!(err, ExplainError::MissingCover { tree: 0 });
    assert!(err.to_string().contains("refit"));
}

#[test]
fn oracle_refuses_wide_models_and_bad_rows() {
    let m = model(vec![Tree::single_leaf(0.0, 1.0)], Family::GradientBoosting, 21);
    assert_eq!(exact_shapley_oracle(&m, &[0.0; 21]), Err(ExplainError::TooManyFeatures(21)));
    let m = model(vec![Tree::single_leaf(0.0, 1.0)], Family::GradientBoosting, 2);
    assert!(matches!(tree_shap_local(&m, &[0.0]), Err(ExplainError::ShapeMismatch { .. })));
}

#[test]
fn shap_global_cases() {
    let constant = model(vec![Tree::single_leaf(1.0, 4.0)], Family::GradientBoosting, 2);
    let x = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.8, 0.9]]);
    assert_eq!(shap_global(&constant, &x).unwrap().scores, vec![0.0, 0.0]);
    assert_eq!(shap_global(&constant, &Matrix::zeros(0, 2)), Err(ExplainError::EmptyInput));

    let m = model(vec![depth_two(), stump(1, 0.4, 2.0, -1.0, 3.0, 5.0)], Family::GradientBoosting, 2);
    let one = Matrix::from_rows(&[vec![0.7, 0.1]]);
    let local = tree_shap_local(&m, one.row(0)).unwrap();
    let global = shap_global(&m, &one).unwrap();
    assert_eq!(global.scores, local.phi.iter().map(|p| p.abs()).collect::<Vec<_>>());

    let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
    let x = Matrix::from_rows(&rows);
    let mut external = [0.0, 0.0];
    for r in &rows {
        let a = tree_shap_local(&m, r).unwrap();
        external[0] += a.phi[0].abs() / 50.0;
        external[1] += a.phi[1].abs() / 50.0;
    }
    let g = shap_global(&m, &x).unwrap();
    for j in 0..2 {
        assert!((g.scores[j] - external[j]).abs() < 1e-12);
    }
}

#[test]
fn importance_csv_layout() {
    let g = ImportanceVector {
        scores: vec![0.25, 0.75],
        method: Method::Gain,
        normalized: true,
    };
    let mut buf = Vec::new();
    write_importance_csv(&mut buf, &["a".into(), "b".into()], &[&g]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "feature_index,feature_name,method,score\n0,a,gain,0.25\n1,b,gain,0.75\n");
}

/// Random tree with covers split by random fractions; depth up to `depth`.
fn random_tree(rng: &mut crate::rng::Rng, d: usize, depth: usize) -> Tree {
    use rand::Rng as _;
    fn grow(rng: &mut crate::rng::Rng, nodes: &mut Vec<TreeNode>, d: usize, depth: usize, cover: f64) -> usize {
        let id = nodes.len();
        nodes.push(TreeNode::leaf(0.0, cover));
        if depth == 0 || rng.random::<f64>() < 0.2 {
            nodes[id] = TreeNode::leaf(rng.random_range(-5.0..5.0), cover);
            return id;
        }
        let frac = rng.random_range(0.05..0.95);
        let feature = rng.random_range(0..d);
        let threshold = rng.random::<f64>();
        let l = grow(rng, nodes, d, depth - 1, cover * frac);
        let r = grow(rng, nodes, d, depth - 1, cover * (1.0 - frac));
        nodes[id] = TreeNode::split(feature, threshold, l, r, rng.random::<f64>(), cover);
        id
    }
    let mut nodes = Vec::new();
    let cover = rng.random_range(1.0..100.0);
    grow(rng, &mut nodes, d, depth, cover);
    Tree::new(nodes)
}

fn random_model(seed: u64, max_d: usize, max_trees: usize, max_depth: usize) -> Ensemble {
    use rand::Rng as _;
    let mut rng = crate::rng::seeded(seed);
    let d = rng.random_range(1..=max_d);
    let t = rng.random_range(1..=max_trees);
    let family = Family::ALL[rng.random_range(0..3)];
    let trees = (0..t)
        .map(|_| {
            let depth = rng.random_range(1..=max_depth);
            random_tree(&mut rng, d, depth)
        })
        .collect();
    let mut m = model(trees, family, d);
    m.base_score = rng.random_range(-1.0..1.0);
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_path_matches_oracle(seed in any::<u64>(), row_seed in any::<u64>()) {
        use rand::Rng as _;
        let m = random_model(seed, 8, 6, 4);
        let mut rng = crate::rng::seeded(row_seed);
        for _ in 0..4 {
            let x: Vec<f64> = (0..m.n_features).map(|_| rng.random()).collect();
            let fast = tree_shap_local(&m, &x).unwrap();
            let slow = exact_shapley_oracle(&m, &x).unwrap();
            prop_assert!((fast.base - slow.base).abs() < 1e-9);
            for (a, b) in fast.phi.iter().zip(&slow.phi) {
                prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", fast.phi, slow.phi);
            }
        }
    }

    #[test]
    fn oracle_is_locally_accurate(seed in any::<u64>()) {
        use rand::Rng as _;
        let m = random_model(seed, 8, 5, 3);
        let mut rng = crate::rng::seeded(seed ^ 0xABCD);
        for _ in 0..100 {
            let x: Vec<f64> = (0..m.n_features).map(|_| rng.random()).collect();
            let a = exact_shapley_oracle(&m, &x).unwrap();
            prop_assert!((a.total() - m.predict_row(&x)).abs() < 1e-9);
        }
    }

    #[test]
    fn gain_is_complete_and_normalized(seed in any::<u64>()) {
        let m = random_model(seed, 10, 8, 4);
        let raw = gain_importance(&m, false);
        let total: f64 = m.trees.iter().flat_map(|t| &t.nodes).map(|n| match n.kind {
            NodeKind::Split { impurity_decrease, .. } => impurity_decrease,
            _ => 0.0,
        }).sum::<f64>() / m.trees.len() as f64;
        prop_assert!((raw.scores.iter().sum::<f64>() - total).abs() < 1e-9);
        let norm = gain_importance(&m, true);
        if !norm.is_all_zero() {
            prop_assert!((norm.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(norm.scores.iter().all(|&s| s >= 0.0));
    }
}
