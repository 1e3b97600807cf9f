use drivelime::lime::Explanation;
use drivelime::metrics::{Averaging, ClassificationScores, MetricsRecord, Phase, RegressionScores, SplitScores};
use drivelime::models::Algorithm;
use drivelime::pipeline::{Context, PipelineConfig};
use drivelime::preprocess::prepare_folds;
use drivelime::selection::{
    aggregate_importance, best_model, evaluate_all, reduce_dataset, sample_by_prediction, select_top_k, FeatureRanking,
};
use drivelime::synth::SynthSpec;
use drivelime::{ModelSpec, Seed};
use proptest::prelude::*;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn explanation(weights: Vec<f64>) -> Explanation<f64> {
    Explanation {
        instance: 0,
        class: 0,
        intercept: 0.0,
        weights,
        score: 0.0,
        probability: 1.0,
    }
}

proptest! {
    #[test]
    fn aggregation_ignores_explanation_order(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 1..30),
        shift in any::<prop::sample::Index>(),
    ) {
        let a: Vec<_> = rows.iter().cloned().map(explanation).collect();
        let mut b = a.clone();
        b.rotate_left(shift.index(a.len()));
        b.reverse();
        let ra = aggregate_importance(&a, &names(5)).unwrap();
        let rb = aggregate_importance(&b, &names(5)).unwrap();
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn ranks_follow_scores(scores in prop::collection::vec(0u32..20, 1..12)) {
        let d = scores.len();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let r = FeatureRanking::from_scores(&names(d), s.clone(), vec![0.0; d]);
        let mut ranks: Vec<usize> = r.features.iter().map(|f| f.rank).collect();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (1..=d).collect::<Vec<_>>());
        let order = r.by_rank();
        for w in order.windows(2) {
            prop_assert!(s[w[0]] > s[w[1]] || (s[w[0]] == s[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn top_k_survives_rescaling(scores in prop::collection::vec(0u32..1000, 1..20), k in 1usize..25, c in 1e-3f64..1e3) {
        let d = scores.len();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let a = select_top_k(&FeatureRanking::from_scores(&names(d), s, vec![0.0; d]), k);
        let b = select_top_k(&FeatureRanking::from_scores(&names(d), scaled, vec![0.0; d]), k);
        prop_assert_eq!(a.len(), k.min(d));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stratified_sample_is_distinct(pred in prop::collection::vec(0usize..3, 1..200), m in 1usize..150, seed in any::<u64>()) {
        let picked = sample_by_prediction(&pred, 3, m, Seed(seed));
        prop_assert_eq!(picked.len(), m.min(pred.len()));
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picked.len());
        prop_assert!(picked.iter().all(|&i| i < pred.len()));
    }
}

#[test]
fn mean_magnitude_counts_zeroed_weights() {
    let e = vec![explanation(vec![0.5, -0.25, 0.0]), explanation(vec![-0.5, 0.0, 0.0])];
    let r = aggregate_importance(&e, &names(3)).unwrap();
    let scores: Vec<f64> = r.features.iter().map(|f| f.score).collect();
    assert_eq!(scores, vec![0.5, 0.125, 0.0]);
    assert_eq!(r.by_rank(), vec![0, 1, 2]);
}

#[test]
fn full_selection_keeps_the_table() {
    let data = SynthSpec::default().generate::<f64>(Seed(2)).unwrap().data;
    let d = data.n_features();
    let ranking = FeatureRanking::from_scores(&data.feature_names(), (0..d).map(|j| j as f64).collect(), vec![0.0; d]);
    let all = select_top_k(&ranking, d);
    assert_eq!(reduce_dataset(&data, &all).unwrap(), data);
    let reduced = reduce_dataset(&data, &select_top_k(&ranking, 3)).unwrap();
    assert_eq!(reduced.n_rows(), data.n_rows());
    assert_eq!(reduced.feature_names(), vec!["feature_16", "feature_17", "feature_18"]);
}

#[test]
fn best_model_prefers_accuracy_then_f1_then_order() {
    let rec = |acc: f64, f1: f64| {
        let s = SplitScores {
            classification: ClassificationScores {
                accuracy: acc,
                precision: f1,
                recall: f1,
                f1,
            },
            regression: RegressionScores {
                mse: 0.0,
                rmse: 0.0,
                r2: None,
                ev: None,
                d2: None,
            },
        };
        MetricsRecord::from_splits("m", Phase::Before, &[s])
    };
    assert_eq!(best_model(&[rec(0.8, 0.9), rec(0.9, 0.1)]), Some(1));
    assert_eq!(best_model(&[rec(0.9, 0.5), rec(0.9, 0.7)]), Some(1));
    assert_eq!(best_model(&[rec(0.9, 0.7), rec(0.9, 0.7)]), Some(0));
    assert_eq!(best_model::<f64>(&[]), None);
}

#[test]
fn random_forest_separates_default_synthetic_data() {
    let config = PipelineConfig {
        seed: 7,
        ..PipelineConfig::default()
    };
    let ctx = Context::<f64>::load(config).unwrap();
    let prepared = prepare_folds(&ctx.data, &ctx.config.prep_options(), Seed(7)).unwrap();
    let rfc = ModelSpec::default_for(Algorithm::RFC, 7);
    let records = evaluate_all(&[rfc], &prepared, 3, Phase::Before, Averaging::Weighted).unwrap();
    assert!(records[0].accuracy >= 0.9, "accuracy {}", records[0].accuracy);
}
