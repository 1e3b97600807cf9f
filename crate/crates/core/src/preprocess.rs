//! Class balancing, standard scaling and repeated stratified splits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{class_counts, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed::Seed;

/// Duplicates minority-class rows (uniformly, with replacement) until every
/// class matches the largest one. Originals keep their order; copies are
/// appended class by class.
pub fn random_oversample<T: Scalar, R: Rng + ?Sized>(data: &Dataset<T>, rng: &mut R) -> Dataset<T> {
    let counts = data.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes()];
    for (i, &c) in data.y.iter().enumerate() {
        members[c].push(i);
    }
    let mut out = data.clone();
    for (c, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        for _ in counts[c]..target {
            let src = rows[rng.random_range(0..rows.len())];
            out.x.push_row(data.x.row(src));
            out.y.push(c);
        }
    }
    out
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalerParams<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

#[derive(Serialize)]
struct ScalerEntry {
    mean: f64,
    std: f64,
}

impl<T: Scalar> ScalerParams<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `{feature_name: {mean, std}}` for audit output.
    pub fn to_json(&self, names: &[String]) -> serde_json::Value {
        let map: std::collections::BTreeMap<&str, ScalerEntry> = names
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(n, (m, s))| {
                (
                    n.as_str(),
                    ScalerEntry {
                        mean: m.as_f64(),
                        std: s.as_f64(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("plain map serialises")
    }

    pub fn select(&self, features: &[usize]) -> Self {
        ScalerParams {
            mean: features.iter().map(|&j| self.mean[j]).collect(),
            std: features.iter().map(|&j| self.std[j]).collect(),
        }
    }
}

pub fn fit_scaler<T: Scalar>(x: &Matrix<T>) -> Result<ScalerParams<T>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::invalid("cannot fit a scaler on zero rows"));
    }
    let nf = T::from_count(n);
    let d = x.cols();
    let mut mean = vec![T::zero(); d];
    for r in x.row_iter() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); d];
    for r in x.row_iter() {
        for j in 0..d {
            let dv = r[j] - mean[j];
            var[j] += dv * dv;
        }
    }
    let std = var.into_iter().map(|v| (v / nf).sqrt()).collect();
    Ok(ScalerParams { mean, std })
}

/// `(x - mean) / std`; zero-variance columns become all zeros.
pub fn apply_scaler<T: Scalar>(x: &Matrix<T>, params: &ScalerParams<T>) -> Result<Matrix<T>> {
    x.ensure_cols(params.dim())?;
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            let s = params.std[j];
            *v = if s > T::zero() {
                (*v - params.mean[j]) / s
            } else {
                T::zero()
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test rows per class: largest-remainder apportionment of `n * test_frac`,
/// keeping at least one training row per class.
pub fn test_allocation(counts: &[usize], test_frac: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let n_classes = counts.iter().filter(|&&c| c > 0).count();
    let total = ((n as f64 * test_frac).round() as usize)
        .max(1)
        .min(n.saturating_sub(n_classes));
    let quota: Vec<f64> = counts.iter().map(|&c| c as f64 * test_frac).collect();
    let cap: Vec<usize> = counts.iter().map(|&c| c.saturating_sub(1)).collect();
    let mut alloc: Vec<usize> = quota
        .iter()
        .zip(&cap)
        .map(|(&q, &cap)| (q.floor() as usize).min(cap))
        .collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quota[a] - quota[a].floor();
        let rb = quota[b] - quota[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    while assigned < total {
        let before = assigned;
        for &c in &order {
            if assigned == total {
                break;
            }
            if alloc[c] < cap[c] {
                alloc[c] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    alloc
}

/// `repeats` independent stratified train/test partitions. Repeat `r` draws
/// from its own stream `seed/split[r]`.
pub fn stratified_shuffle_splits(
    y: &[usize],
    n_classes: usize,
    repeats: usize,
    test_frac: f64,
    seed: Seed,
) -> Result<Vec<SplitIndices>> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_frac} not in (0, 1)")));
    }
    let counts = class_counts(y, n_classes);
    if let Some(c) = counts.iter().position(|&k| k == 1) {
        return Err(Error::invalid(format!(
            "class {c} has a single row and cannot be stratified"
        )));
    }
    if counts.iter().filter(|&&k| k > 0).count() < 2 {
        return Err(Error::invalid("stratified splitting needs at least two classes"));
    }
    let alloc = test_allocation(&counts, test_frac);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    Ok((0..repeats)
        .map(|r| {
            let mut rng = seed.derive("split", r as u64).rng();
            let mut train = Vec::with_capacity(y.len());
            let mut test = Vec::new();
            for (c, rows) in members.iter().enumerate() {
                let mut rows = rows.clone();
                rows.shuffle(&mut rng);
                test.extend_from_slice(&rows[..alloc[c]]);
                train.extend_from_slice(&rows[alloc[c]..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            SplitIndices { train, test }
        })
        .collect())
}

/// One materialised train/test partition, already balanced and scaled
/// according to the chosen preprocessing order.
#[derive(Debug, Clone)]
pub struct Fold<T> {
    pub x_train: Matrix<T>,
    pub y_train: Vec<usize>,
    pub x_test: Matrix<T>,
    pub y_test: Vec<usize>,
}

impl<T: Scalar> Fold<T> {
    pub fn n_features(&self) -> usize {
        self.x_train.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepOptions {
    pub oversample: bool,
    /// Split first, then balance and scale each training set on its own.
    pub leak_safe: bool,
    pub repeats: usize,
    pub test_frac: f64,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            oversample: true,
            leak_safe: false,
            repeats: 20,
            test_frac: 0.12,
        }
    }
}

/// Output of [`prepare_folds`]. In the default order the whole dataset is
/// balanced and scaled once, and that transformed table is kept here.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub folds: Vec<Fold<T>>,
    pub splits: Vec<SplitIndices>,
    pub transformed: Option<(Dataset<T>, ScalerParams<T>)>,
}

pub fn prepare_folds<T: Scalar>(data: &Dataset<T>, opts: &PrepOptions, seed: Seed) -> Result<Prepared<T>> {
    if opts.repeats == 0 {
        return Err(Error::invalid("at least one split repeat is required"));
    }
    let c = data.n_classes();
    if !opts.leak_safe {
        let balanced = if opts.oversample {
            random_oversample(data, &mut seed.derive("oversample", 0).rng())
        } else {
            data.clone()
        };
        let params = fit_scaler(&balanced.x)?;
        let scaled = Dataset {
            x: apply_scaler(&balanced.x, &params)?,
            ..balanced
        };
        let splits = stratified_shuffle_splits(&scaled.y, c, opts.repeats, opts.test_frac, seed)?;
        let folds = splits
            .iter()
            .map(|s| Fold {
                x_train: scaled.x.select_rows(&s.train),
                y_train: s.train.iter().map(|&i| scaled.y[i]).collect(),
                x_test: scaled.x.select_rows(&s.test),
                y_test: s.test.iter().map(|&i| scaled.y[i]).collect(),
            })
            .collect();
        return Ok(Prepared {
            folds,
            splits,
            transformed: Some((scaled, params)),
        });
    }

    let splits = stratified_shuffle_splits(&data.y, c, opts.repeats, opts.test_frac, seed)?;
    let folds = splits
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let train = data.select_rows(&s.train);
            let train = if opts.oversample {
                random_oversample(&train, &mut seed.derive("oversample", r as u64).rng())
            } else {
                train
            };
            let params = fit_scaler(&train.x)?;
            Ok(Fold {
                x_train: apply_scaler(&train.x, &params)?,
                y_train: train.y,
                x_test: apply_scaler(&data.x.select_rows(&s.test), &params)?,
                y_test: s.test.iter().map(|&i| data.y[i]).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        folds,
        splits,
        transformed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnKind, ColumnSchema};
    use approx::assert_abs_diff_eq;

    fn dataset(counts: &[usize]) -> Dataset<f64> {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, &k) in counts.iter().enumerate() {
            for i in 0..k {
                rows.push(vec![c as f64 * 10.0 + i as f64, (i % 3) as f64]);
                y.push(c);
            }
        }
        let schema = (0..2)
            .map(|index| ColumnSchema {
                name: format!("f{index}"),
                kind: ColumnKind::Numeric,
                index,
            })
            .collect();
        let classes = (0..counts.len()).map(|c| format!("c{c}")).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap(), y, schema, classes).unwrap()
    }

    #[test]
    fn oversample_balances_and_duplicates() {
        let d = dataset(&[10, 4, 7]);
        let o = random_oversample(&d, &mut Seed(1).rng());
        assert_eq!(o.class_counts(), vec![10, 10, 10]);
        assert_eq!(o.n_rows(), 30);
        assert_eq!(o.x.select_rows(&(0..21).collect::<Vec<_>>()), d.x);
        for i in 21..30 {
            let found = (0..21).any(|j| d.y[j] == o.y[i] && d.x.row(j) == o.x.row(i));
            assert!(found, "row {i} is not a same-class duplicate");
        }
        let balanced = dataset(&[5, 5]);
        assert_eq!(random_oversample(&balanced, &mut Seed(1).rng()), balanced);
    }

    #[test]
    fn scaler_worked_example() {
        let x = Matrix::from_rows(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]]).unwrap();
        let p = fit_scaler(&x).unwrap();
        assert_abs_diff_eq!(p.mean[0], 4.0);
        assert_abs_diff_eq!(p.std[0], (8.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let s = apply_scaler(&x, &p).unwrap();
        for (got, want) in s.column(0).iter().zip([-1.224744871391589, 0.0, 1.224744871391589]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
        assert_eq!(s.column(1), vec![0.0; 3]);
        let again = apply_scaler(&s, &fit_scaler(&s).unwrap()).unwrap();
        for (a, b) in again.as_slice().iter().zip(s.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let wrong = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(apply_scaler(&wrong, &p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn scaler_json_shape() {
        let p = ScalerParams {
            mean: vec![1.0, 2.0],
            std: vec![0.5, 0.0],
        };
        let v = p.to_json(&["speed".into(), "gear".into()]);
        assert_eq!(v["speed"]["mean"], 1.0);
        assert_eq!(v["gear"]["std"], 0.0);
    }

    #[test]
    fn split_arithmetic_balanced() {
        let y: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let splits = stratified_shuffle_splits(&y, 2, 20, 0.12, Seed(3)).unwrap();
        assert_eq!(splits.len(), 20);
        for s in &splits {
            let a = s.test.iter().filter(|&&i| y[i] == 0).count();
            assert_eq!((a, s.test.len() - a), (6, 6));
            assert_eq!(s.train.len() + s.test.len(), 100);
        }
        assert_eq!(splits, stratified_shuffle_splits(&y, 2, 20, 0.12, Seed(3)).unwrap());
        assert_ne!(splits[0], splits[1]);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let y = vec![0, 0, 0, 1];
        assert!(stratified_shuffle_splits(&y, 2, 1, 0.5, Seed(0)).is_err());
        assert!(stratified_shuffle_splits(&[0, 0, 1, 1], 2, 1, 1.0, Seed(0)).is_err());
    }

    #[test]
    fn allocation_total_is_exact() {
        // quotas 1.2, 0.84, 0.36 -> total round(2.4) = 2
        assert_eq!(test_allocation(&[10, 7, 3], 0.12), vec![1, 1, 0]);
        assert_eq!(test_allocation(&[2, 2], 0.9), vec![1, 1]);
    }

    #[test]
    fn leak_safe_folds_scale_on_train_only() {
        let d = dataset(&[20, 12]);
        let opts = PrepOptions {
            leak_safe: true,
            repeats: 3,
            ..Default::default()
        };
        let p = prepare_folds(&d, &opts, Seed(5)).unwrap();
        assert!(p.transformed.is_none());
        for f in &p.folds {
            let counts = class_counts(&f.y_train, 2);
            assert_eq!(counts[0], counts[1]);
            let sp = fit_scaler(&f.x_train).unwrap();
            assert_abs_diff_eq!(sp.mean[0], 0.0, epsilon = 1e-9);
            assert_eq!(f.y_test.len(), 4);
        }
    }
}
