use proptest::prelude::*;

use super::report::{aggregate_json, read_iterations_csv, write_iterations_csv};
use super::*;
use crate::ensemble::{Family, TieBreak};

fn small(kind: ExperimentKind, family: Family, d: usize, iters: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::synthetic(kind, family, 120, d);
    c.n_iterations = iters;
    c.params.n_trees = Some(15);
    c
}

fn bare_record(i: usize) -> IterationRecord {
    IterationRecord {
        iteration: i,
        seed: i as u64,
        gain_corr: CorrelationPair {
            spearman: Some(0.5),
            pearson: Some(0.25),
        },
        shap_corr: CorrelationPair::default(),
        prediction_corr: None,
        rank_outcomes_gain: vec![RankCategory::Correct],
        rank_outcomes_shap: vec![RankCategory::Incorrect],
        model_metric: Some(0.9),
        gain_importance: vec![0.2, 0.8],
        shap_importance: vec![1.5, 0.5],
        sanity_flag: false,
        ties: false,
    }
}

#[test]
fn single_record_aggregate_is_the_record() {
    let agg = aggregate(&[bare_record(0)]);
    let g = agg.column("gain_spearman").unwrap();
    assert_eq!((g.mean, g.std, g.count, g.excluded), (Some(0.5), Some(0.0), 1, 0));
    assert_eq!(agg.column("shap_spearman").unwrap().excluded, 1);
    assert!(agg.column("prediction_spearman").is_none());
    assert_eq!(agg.argmax_counts["gain"], vec![0, 1]);
    assert_eq!(agg.argmax_counts["shap"], vec![1, 0]);
    assert_eq!(agg.rank_proportions["gain"][0].correct, 1.0);
}

#[test]
fn undefined_entries_are_excluded_and_counted() {
    let mut r1 = bare_record(1);
    r1.gain_corr.spearman = None;
    let mut r2 = bare_record(2);
    r2.gain_corr.spearman = Some(1.0);
    let agg = aggregate(&[bare_record(0), r1, r2]);
    let g = agg.column("gain_spearman").unwrap();
    assert_eq!(g.count, 2);
    assert_eq!(g.excluded, 1);
    assert_eq!(g.mean, Some(0.75));
    assert_eq!(g.std, Some(0.25));
}

proptest! {
    #[test]
    fn rank_proportions_partition_exactly(codes in prop::collection::vec(0u8..3, 1..200)) {
        let records: Vec<IterationRecord> = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut r = bare_record(i);
                r.rank_outcomes_gain = vec![[RankCategory::Correct, RankCategory::IncorrectButTop, RankCategory::Incorrect][c as usize]];
                r
            })
            .collect();
        let p = &aggregate(&records).rank_proportions["gain"][0];
        prop_assert_eq!(p.correct + p.incorrect_but_top + p.incorrect, 1.0);
        let ones = codes.iter().filter(|&&c| c == 2).count() as f64 / codes.len() as f64;
        prop_assert!((p.incorrect - ones).abs() < 1e-12);
    }
}

#[test]
fn single_informative_feature_is_always_ranked_first() {
    let mut c = small(ExperimentKind::Accuracy, Family::SecondOrderBoosting, 5, 8);
    c.coefficients = Some(vec![0.0, 0.0, 7.0, 0.0, 0.0]);
    c.k = 1;
    let rep = run_accuracy(&c).unwrap();
    // A categorical draw can leave every label equal (nothing to learn);
    // those iterations carry all-zero importances and are skipped.
    let learned: Vec<&IterationRecord> = rep.records.iter().filter(|r| r.gain_importance.iter().any(|&g| g > 0.0)).collect();
    assert!(learned.len() >= 4);
    for r in learned {
        assert_eq!(r.rank_outcomes_gain, vec![RankCategory::Correct]);
        assert_eq!(r.rank_outcomes_shap, vec![RankCategory::Correct]);
    }
}

#[test]
fn noiseless_input_perturbation_gives_identical_models() {
    let c = small(ExperimentKind::InputPerturbation, Family::GradientBoosting, 4, 3);
    let rep = run_input_perturbation(&c).unwrap();
    for r in &rep.records {
        assert_eq!(r.gain_corr.spearman, Some(1.0));
        assert_eq!(r.shap_corr.spearman, Some(1.0));
        assert_eq!(r.prediction_corr.unwrap().pearson, Some(1.0));
        assert!(!r.sanity_flag);
    }
}

#[test]
fn noisy_input_perturbation_reports_prediction_correlation() {
    let mut c = small(ExperimentKind::InputPerturbation, Family::RandomForest, 4, 3);
    c.noise = NoiseLevel::High;
    let rep = run_input_perturbation(&c).unwrap();
    assert!(rep.records.iter().all(|r| r.prediction_corr.is_some()));
    assert_eq!(rep.aggregates.column("prediction_pearson").unwrap().count + rep.aggregates.column("prediction_pearson").unwrap().excluded, 3);
}

#[test]
fn deterministic_booster_ignores_the_seed() {
    let c = small(ExperimentKind::SeedPerturbation, Family::SecondOrderBoosting, 6, 4);
    let rep = run_seed_perturbation(&c).unwrap();
    for r in &rep.records {
        assert_eq!(r.gain_corr.spearman, Some(1.0));
        assert_eq!(r.shap_corr.spearman, Some(1.0));
    }
}

#[test]
fn single_tree_forest_with_equal_seeds_is_reproduced() {
    let mut c = small(ExperimentKind::SeedPerturbation, Family::RandomForest, 6, 3);
    c.params.n_trees = Some(1);
    c.pair_seed_offset = 0;
    let rep = run_seed_perturbation(&c).unwrap();
    assert!(rep.records.iter().all(|r| r.gain_corr.spearman == Some(1.0)));
}

#[test]
fn hyperparam_budget_one_with_equal_search_seeds_matches() {
    let mut c = small(ExperimentKind::HyperparamPerturbation, Family::GradientBoosting, 4, 2);
    c.search_budget = 1;
    c.pair_seed_offset = 0;
    c.search.n_trees = crate::ensemble::IntRange::Uniform { lo: 5, hi: 20 };
    let rep = run_hyperparam_perturbation(&c).unwrap();
    for r in &rep.records {
        assert_eq!(r.gain_corr.spearman, Some(1.0));
        assert_eq!(r.prediction_corr.unwrap().spearman, Some(1.0));
    }
}

#[test]
fn redundancy_without_shuffling_concentrates_on_first_copy() {
    let mut c = ExperimentConfig::synthetic(ExperimentKind::Redundancy, Family::SecondOrderBoosting, 200, 10);
    c.n_iterations = 4;
    c.params.n_trees = Some(10);
    let rep = run_redundancy(&c).unwrap();
    for r in &rep.records {
        assert_eq!(r.gain_importance[0], 1.0);
        assert!(r.gain_importance[1..].iter().all(|&g| g == 0.0));
    }
    assert_eq!(rep.aggregates.argmax_counts["gain"][0], 4);
}

#[test]
fn redundancy_shuffling_maps_mass_back_to_original_identity() {
    let mut c = ExperimentConfig::synthetic(ExperimentKind::Redundancy, Family::SecondOrderBoosting, 200, 10);
    c.n_iterations = 6;
    c.params.n_trees = Some(5);
    c.params.tie_break = Some(TieBreak::LowestIndex);
    c.shuffle_features = true;
    let rep = run_redundancy(&c).unwrap();
    let mut winners = std::collections::BTreeSet::new();
    for r in &rep.records {
        let mut order: Vec<usize> = (0..10).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::seeded(rng::derive(r.seed, Stream::Shuffle)));
        // Lowest fitted column is original feature order[0].
        assert_eq!(r.gain_importance[order[0]], 1.0);
        winners.insert(order[0]);
    }
    assert!(winners.len() > 1);
}

#[test]
fn rerun_is_identical() {
    let mut c = small(ExperimentKind::SeedPerturbation, Family::RandomForest, 5, 3);
    c.root_seed = 11;
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        aggregate_json([(&a.key, &a.aggregates)]),
        aggregate_json([(&b.key, &b.aggregates)])
    );
}

#[test]
fn aggregates_recompute_from_iteration_csv() {
    let mut acc = small(ExperimentKind::Accuracy, Family::GradientBoosting, 5, 6);
    acc.noise = NoiseLevel::Low;
    let pair = small(ExperimentKind::InputPerturbation, Family::SecondOrderBoosting, 5, 5);
    let reports = vec![run(&acc).unwrap(), run(&pair).unwrap()];
    let mut buf = Vec::new();
    write_iterations_csv(&mut buf, &reports).unwrap();
    let cells = read_iterations_csv(buf.as_slice()).unwrap();
    assert_eq!(cells.len(), 2);
    for ((key, records), rep) in cells.iter().zip(&reports) {
        assert_eq!(key, &rep.key);
        assert_eq!(records, &rep.records);
        assert_eq!(aggregate(records), rep.aggregates);
    }
}

#[test]
fn malformed_iteration_csv_is_rejected() {
    assert!(read_iterations_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn config_errors() {
    let csv = DataSource::Csv {
        path: "x.csv".into(),
        schema: crate::data::Schema::new(crate::data::Task::Regression),
    };
    let c = ExperimentConfig::new(ExperimentKind::Accuracy, Family::RandomForest, csv);
    assert!(matches!(run(&c), Err(HarnessError::Config(_))));
    let mut c = small(ExperimentKind::SeedPerturbation, Family::RandomForest, 5, 3);
    c.noise = NoiseLevel::Low;
    assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    let mut c = small(ExperimentKind::Accuracy, Family::RandomForest, 5, 0);
    assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    c.n_iterations = 1;
    c.k = 6;
    assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    let c = small(ExperimentKind::Redundancy, Family::RandomForest, 5, 1);
    assert!(matches!(run_accuracy(&c), Err(HarnessError::Config(_))));
}

#[test]
fn audit_file_expands_the_sweep() {
    let text = r#"
experiment = "input_perturbation"
family = ["xgb", "rf"]
noise = ["low", "high"]
n_iterations = 7
root_seed = 3

[data]
source = "synthetic"
n_samples = 100
n_features = [5, 10, 25]

[params]
n_trees = 20
"#;
    let file = AuditFile::parse(text).unwrap();
    let cells = file.expand(99).unwrap();
    assert_eq!(cells.len(), 12);
    assert!(cells.iter().all(|c| c.n_iterations == 7 && c.root_seed == 3 && c.params.n_trees == Some(20)));
    assert_eq!(cells[0].family, Family::SecondOrderBoosting);
    assert_eq!(cells[1].noise, NoiseLevel::High);
    assert_eq!(cells[2].data, DataSource::Synthetic { n_samples: 100, n_features: 10 });

    let defaults = AuditFile::parse("experiment = \"redundancy\"").unwrap().expand(42).unwrap();
    assert_eq!(defaults.len(), 1);
    assert_eq!(defaults[0].n_iterations, 30);
    assert_eq!(defaults[0].root_seed, 42);

    assert!(AuditFile::parse("experiment = \"bogus\"").is_err());
    assert!(AuditFile::parse("experiment = \"accuracy\"\nunknown_key = 1").is_err());
}
