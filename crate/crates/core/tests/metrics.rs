use drivelime::metrics::{classification_metrics, regression_style_metrics, Averaging, ConfusionCounts};
use proptest::prelude::*;

fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..5, 2usize..40).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(0..k, n),
            prop::collection::vec(0..k, n),
        )
    })
}

fn reals() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..50).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #[test]
    fn perfect_predictions_score_one(y in prop::collection::vec(0usize..4, 1..30)) {
        let s = classification_metrics::<f64>(&y, &y, Averaging::Weighted).unwrap();
        prop_assert_eq!(s.accuracy, 1.0);
        prop_assert!((s.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_are_bounded((y, p) in labels()) {
        for avg in [Averaging::Weighted, Averaging::Macro] {
            let s = classification_metrics::<f64>(&y, &p, avg).unwrap();
            for v in [s.accuracy, s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn confusion_counts_partition_rows((y, p) in labels()) {
        let cm = ConfusionCounts::new(&y, &p).unwrap();
        let correct: usize = cm.classes.iter().map(|c| c.tp).sum();
        prop_assert_eq!(correct, cm.correct());
        for c in &cm.classes {
            prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, cm.total);
        }
    }

    #[test]
    fn weighted_scores_survive_relabelling((y, p) in labels(), shift in 1usize..4) {
        let k = y.iter().chain(&p).max().unwrap() + 1;
        let relabel = |v: &[usize]| v.iter().map(|&c| (c + shift) % k).collect::<Vec<_>>();
        let a = classification_metrics::<f64>(&y, &p, Averaging::Weighted).unwrap();
        let b = classification_metrics::<f64>(&relabel(&y), &relabel(&p), Averaging::Weighted).unwrap();
        prop_assert!((a.precision - b.precision).abs() < 1e-12);
        prop_assert!((a.recall - b.recall).abs() < 1e-12);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    #[test]
    fn regression_identities((y, p) in reals()) {
        let r = regression_style_metrics(&y, &p).unwrap();
        prop_assert!((r.rmse * r.rmse - r.mse).abs() <= 1e-12 * r.mse.max(1.0));
        if let (Some(r2), Some(ev), Some(d2)) = (r.r2, r.ev, r.d2) {
            prop_assert!(r2 <= ev + 1e-12);
            prop_assert!((d2 - r2).abs() <= 1e-12);
        }
    }

    #[test]
    fn ev_equals_r2_for_zero_mean_residuals(y in prop::collection::vec(-10.0f64..10.0, 3..30)) {
        // Residuals alternate ±0.5 around a symmetric pattern, so their mean is zero.
        let n = y.len() / 2 * 2;
        let y = &y[..n];
        let p: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let r = regression_style_metrics(y, &p).unwrap();
        if let (Some(r2), Some(ev)) = (r.r2, r.ev) {
            prop_assert!((r2 - ev).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_truth_leaves_r2_undefined() {
    let r = regression_style_metrics::<f64>(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
    assert!(r.r2.is_none() && r.ev.is_none() && r.d2.is_none());
    assert!((r.mse - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(classification_metrics::<f64>(&[0, 1], &[0], Averaging::Weighted).is_err());
    assert!(regression_style_metrics(&[0.0, 1.0], &[0.0]).is_err());
}

#[test]
fn single_precision_agrees_with_double() {
    let y = [0usize, 1, 2, 2, 1, 0, 0];
    let p = [0usize, 2, 2, 1, 1, 0, 1];
    let a = classification_metrics::<f32>(&y, &p, Averaging::Weighted).unwrap();
    let b = classification_metrics::<f64>(&y, &p, Averaging::Weighted).unwrap();
    assert!((a.f1 as f64 - b.f1).abs() < 1e-6);
}
