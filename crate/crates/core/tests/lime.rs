use drivelime::data::ColumnKind;
use drivelime::lime::{fit_discretizer, fit_surrogate, kernel_weights, perturb, FeatureBins, LimeConfig, LimeExplainer};
use drivelime::models::LogisticRegression;
use drivelime::{Matrix, Seed};
use proptest::prelude::*;

fn binary_matrix(n: usize, d: usize, bits: &[bool]) -> Matrix<f64> {
    let mut z = Matrix::zeros(n, d);
    for (v, &b) in z.as_mut_slice().iter_mut().zip(bits) {
        *v = if b { 1.0 } else { 0.0 };
    }
    z
}

fn objective(z: &Matrix<f64>, y: &[f64], w: &[f64], alpha: f64, intercept: f64, beta: &[f64]) -> f64 {
    let fit: f64 = z
        .row_iter()
        .zip(y)
        .zip(w)
        .map(|((r, &t), &wi)| {
            let pred = intercept + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            wi * (t - pred).powi(2)
        })
        .sum();
    fit + alpha * beta.iter().map(|b| b * b).sum::<f64>()
}

/// (z, target, weights, alpha)
fn surrogate_problem() -> impl Strategy<Value = (Matrix<f64>, Vec<f64>, Vec<f64>, f64)> {
    (10usize..60, 1usize..6).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(any::<bool>(), n * d),
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.05f64..1.0, n),
            0.01f64..3.0,
        )
            .prop_map(move |(bits, y, w, alpha)| (binary_matrix(n, d, &bits), y, w, alpha))
    })
}

proptest! {
    #[test]
    fn surrogate_is_a_minimiser((z, y, w, alpha) in surrogate_problem()) {
        let d = z.cols();
        let fit = fit_surrogate(&z, &y, &w, alpha, d).unwrap();
        let best = objective(&z, &y, &w, alpha, fit.intercept, &fit.dense);
        for j in 0..d {
            for step in [-1e-3, 1e-3] {
                let mut beta = fit.dense.clone();
                beta[j] += step;
                let moved = objective(&z, &y, &w, alpha, fit.intercept, &beta);
                prop_assert!(moved >= best - 1e-12 * best.abs().max(1.0));
            }
        }
        for step in [-1e-3, 1e-3] {
            let moved = objective(&z, &y, &w, alpha, fit.intercept + step, &fit.dense);
            prop_assert!(moved >= best - 1e-12 * best.abs().max(1.0));
        }
    }

    #[test]
    fn splitting_a_row_in_two_changes_nothing((z, y, w, alpha) in surrogate_problem(), pick in any::<prop::sample::Index>()) {
        let d = z.cols();
        let r = pick.index(z.rows());
        let mut z2 = z.clone();
        z2.push_row(z.row(r));
        let mut y2 = y.clone();
        y2.push(y[r]);
        let mut w2 = w.clone();
        w2[r] /= 2.0;
        w2.push(w[r] / 2.0);
        let a = fit_surrogate(&z, &y, &w, alpha, d).unwrap();
        let b = fit_surrogate(&z2, &y2, &w2, alpha, d).unwrap();
        for (p, q) in a.dense.iter().zip(&b.dense) {
            prop_assert!((p - q).abs() <= 1e-9);
        }
        prop_assert!((a.intercept - b.intercept).abs() <= 1e-9);
    }

    #[test]
    fn truncation_keeps_the_largest((z, y, w, alpha) in surrogate_problem(), k in 1usize..4) {
        let fit = fit_surrogate(&z, &y, &w, alpha, k).unwrap();
        let kept = fit.sparse.iter().filter(|v| **v != 0.0).count();
        prop_assert!(kept <= k);
        let smallest_kept = fit.sparse.iter().filter(|v| **v != 0.0).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        for (s, d) in fit.sparse.iter().zip(&fit.dense) {
            if *s == 0.0 {
                prop_assert!(d.abs() <= smallest_kept);
            } else {
                prop_assert_eq!(s, d);
            }
        }
    }

    #[test]
    fn bins_are_monotone(values in prop::collection::vec(-1e3f64..1e3, 4..80), probes in prop::collection::vec(-2e3f64..2e3, 2..20)) {
        let x = Matrix::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let disc = fit_discretizer(&x, &[ColumnKind::Numeric], 4).unwrap();
        let FeatureBins::Numeric { boundaries, .. } = &disc.features[0] else {
            panic!("numeric column expected");
        };
        prop_assert!(boundaries.windows(2).all(|w| w[0] <= w[1]));
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let bins: Vec<usize> = sorted.iter().map(|&v| disc.features[0].bin(v).unwrap()).collect();
        prop_assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(bins.iter().all(|&b| b < 4));
    }

    #[test]
    fn perturbations_respect_bins(seed in any::<u64>(), pick in 0usize..50) {
        let mut rng = Seed(seed).rng();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.37).sin() * 10.0, (i % 3) as f64, i as f64])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let kinds = [ColumnKind::Numeric, ColumnKind::Categorical, ColumnKind::Numeric];
        let disc = fit_discretizer(&x, &kinds, 4).unwrap();
        let instance = x.row(pick).to_vec();
        let (px, pz) = perturb(&instance, &disc, 400, &mut rng).unwrap();
        prop_assert_eq!(px.row(0), &instance[..]);
        prop_assert!(pz.row(0).iter().all(|&v| v == 1.0));
        for i in 0..px.rows() {
            for j in 0..3 {
                let same = disc.features[j].bin(px[(i, j)]) == disc.features[j].bin(instance[j]);
                prop_assert!(pz[(i, j)] == 0.0 || pz[(i, j)] == 1.0);
                prop_assert_eq!(pz[(i, j)] == 1.0, same);
                let col = x.column(j);
                let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                prop_assert!(px[(i, j)] >= lo && px[(i, j)] <= hi);
            }
        }
        let weights = kernel_weights(&pz, 0.75 * 3f64.sqrt());
        prop_assert_eq!(weights[0], 1.0);
        for (w, r) in weights.iter().zip(pz.row_iter()) {
            let off = r.iter().filter(|&&v| v == 0.0).count() as f64;
            prop_assert!((w - (-off / (0.5625 * 3.0)).exp()).abs() < 1e-15);
        }
    }
}

fn toy_model() -> LogisticRegression<f64> {
    let w = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.5, -0.7, 0.1]]).unwrap();
    LogisticRegression::from_parameters(w, vec![0.0, 0.2]).unwrap()
}

fn toy_data() -> Matrix<f64> {
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|i| {
            let t = i as f64;
            vec![(t * 0.13).sin(), (t * 0.71).cos() * 2.0, t / 60.0 - 1.0]
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn explanations_are_deterministic_and_sparse() {
    let x = toy_data();
    let config = LimeConfig {
        k_features: 2,
        n_samples: 800,
        ..LimeConfig::default()
    };
    let kinds = [ColumnKind::Numeric; 3];
    let a = LimeExplainer::new(&x, &kinds, config.clone(), Seed(5)).unwrap();
    let b = LimeExplainer::new(&x, &kinds, config, Seed(5)).unwrap();
    let m = toy_model();
    let ea = a.explain(&m, x.row(7), 7).unwrap();
    assert_eq!(ea, b.explain(&m, x.row(7), 7).unwrap());
    assert!(ea.weights.iter().filter(|v| **v != 0.0).count() <= 2);
    assert_ne!(ea, a.explain(&m, x.row(7), 8).unwrap());
}

#[test]
fn anchor_row_enters_the_fit_with_unit_weight() {
    let x = toy_data();
    let e = LimeExplainer::new(&x, &[ColumnKind::Numeric; 3], LimeConfig::default(), Seed(1)).unwrap();
    let set = e.perturbation_set(&toy_model(), x.row(3), e.instance_seed(3)).unwrap();
    assert_eq!(set.weights[0], 1.0);
    assert_eq!(set.x.row(0), x.row(3));
    assert!(set.z.row(0).iter().all(|&v| v == 1.0));
}

#[test]
fn degenerate_configs_are_rejected() {
    let tiny = LimeConfig {
        kernel_width: Some(1e-13),
        ..LimeConfig::default()
    };
    assert!(tiny.validate(3).is_err());
    let few = LimeConfig {
        n_samples: 4,
        ..LimeConfig::default()
    };
    assert!(few.validate(3).is_err());
    let negative = LimeConfig {
        ridge_alpha: -1.0,
        ..LimeConfig::default()
    };
    assert!(negative.validate(3).is_err());
    assert!(LimeConfig::default().validate(18).is_ok());
}

#[test]
fn larger_ridge_shrinks_coefficients() {
    let bits: Vec<bool> = (0..200).map(|i| (i * 7919) % 5 < 2).collect();
    let z = binary_matrix(50, 4, &bits);
    let y: Vec<f64> = z.row_iter().map(|r| 0.3 * r[0] - 0.5 * r[2] + 0.1).collect();
    let w = vec![1.0; 50];
    let norm = |alpha: f64| {
        let f = fit_surrogate(&z, &y, &w, alpha, 4).unwrap();
        f.dense.iter().map(|b| b * b).sum::<f64>()
    };
    assert!(norm(10.0) < norm(1.0) && norm(1.0) < norm(0.01));
}
