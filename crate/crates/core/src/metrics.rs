//! Classification scores, label-code regression scores and the split-averaged
//! evaluation protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{train, Classifier, ModelSpec};
use crate::preprocess::Fold;
use crate::scalar::{mean, pairwise_sum, Scalar};
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ClassCounts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

/// One-vs-rest counts for every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: Vec<ClassCounts>,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn new(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        check_lengths(y_true.len(), y_pred.len(), 1)?;
        let n_classes = y_true.iter().chain(y_pred).max().map_or(0, |m| m + 1);
        let mut classes = vec![ClassCounts::default(); n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t == p {
                classes[t].tp += 1;
            } else {
                classes[p].fp += 1;
                classes[t].fn_ += 1;
            }
        }
        let total = y_true.len();
        for c in &mut classes {
            c.tn = total - c.tp - c.fp - c.fn_;
        }
        Ok(ConfusionCounts { classes, total })
    }

    pub fn correct(&self) -> usize {
        self.classes.iter().map(|c| c.tp).sum()
    }
}

fn check_lengths(a: usize, b: usize, min: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} true vs {b} predicted")));
    }
    if a < min {
        return Err(Error::invalid(format!("need at least {min} observations, got {a}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Per-class scores weighted by true-class support.
    #[default]
    Weighted,
    /// Unweighted mean over classes appearing in either vector.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassificationScores<T> {
    pub accuracy: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

pub fn classification_metrics<T: Scalar>(
    y_true: &[usize],
    y_pred: &[usize],
    averaging: Averaging,
) -> Result<ClassificationScores<T>> {
    let cm = ConfusionCounts::new(y_true, y_pred)?;
    let mut p = Vec::new();
    let mut r = Vec::new();
    let mut f = Vec::new();
    let mut w = Vec::new();
    for c in &cm.classes {
        let present = c.support() + c.fp > 0;
        if !present {
            continue;
        }
        let prec: T = ratio(c.tp, c.tp + c.fp);
        let rec: T = ratio(c.tp, c.tp + c.fn_);
        let f1 = if prec + rec > T::zero() {
            T::lit(2.0) * prec * rec / (prec + rec)
        } else {
            T::zero()
        };
        p.push(prec);
        r.push(rec);
        f.push(f1);
        w.push(match averaging {
            Averaging::Weighted => T::from_count(c.support()),
            Averaging::Macro => T::one(),
        });
    }
    let wsum = pairwise_sum(&w);
    let avg = |v: &[T]| {
        let terms: Vec<T> = v.iter().zip(&w).map(|(&a, &b)| a * b).collect();
        pairwise_sum(&terms) / wsum
    };
    Ok(ClassificationScores {
        accuracy: ratio(cm.correct(), cm.total),
        precision: avg(&p),
        recall: avg(&r),
        f1: avg(&f),
    })
}

/// Regression-style scores on class codes. `r2`, `ev` and `d2` are `None`
/// when the true values are constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionScores<T> {
    pub mse: T,
    pub rmse: T,
    pub r2: Option<T>,
    pub ev: Option<T>,
    pub d2: Option<T>,
}

fn population_variance<T: Scalar>(v: &[T]) -> T {
    let m = mean(v);
    let sq: Vec<T> = v.iter().map(|&x| (x - m) * (x - m)).collect();
    mean(&sq)
}

/// Squared-error (Gaussian) unit deviance.
fn unit_deviance<T: Scalar>(y: T, mu: T) -> T {
    (y - mu) * (y - mu)
}

/// Fraction of null deviance explained, with the squared-error deviance.
pub fn d2_score<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Option<T> {
    let m = mean(y_true);
    let dev: Vec<T> = y_true.iter().zip(y_pred).map(|(&y, &p)| unit_deviance(y, p)).collect();
    let null: Vec<T> = y_true.iter().map(|&y| unit_deviance(y, m)).collect();
    let null = pairwise_sum(&null);
    (null > T::zero()).then(|| T::one() - pairwise_sum(&dev) / null)
}

pub fn regression_style_metrics<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Result<RegressionScores<T>> {
    check_lengths(y_true.len(), y_pred.len(), 2)?;
    let sq: Vec<T> = y_true.iter().zip(y_pred).map(|(&y, &p)| (y - p) * (y - p)).collect();
    let mse = mean(&sq);
    let m = mean(y_true);
    let tot: Vec<T> = y_true.iter().map(|&y| (y - m) * (y - m)).collect();
    let sst = pairwise_sum(&tot);
    let var_y = population_variance(y_true);
    let residual: Vec<T> = y_true.iter().zip(y_pred).map(|(&y, &p)| y - p).collect();
    let defined = sst > T::zero();
    Ok(RegressionScores {
        mse,
        rmse: mse.sqrt(),
        r2: defined.then(|| T::one() - pairwise_sum(&sq) / sst),
        ev: defined.then(|| T::one() - population_variance(&residual) / var_y),
        d2: d2_score(y_true, y_pred),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Before,
    After,
}

/// One row of a comparison table. `rmse` is always `√mse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsRecord<T> {
    pub model: String,
    pub phase: Phase,
    pub accuracy: T,
    pub f1_weighted: T,
    pub ev: Option<T>,
    pub mse: T,
    pub rmse: T,
    pub r2: Option<T>,
    pub d2: Option<T>,
}

/// Scores of one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitScores<T> {
    pub classification: ClassificationScores<T>,
    pub regression: RegressionScores<T>,
}

pub fn score_predictions<T: Scalar>(y_true: &[usize], y_pred: &[usize], averaging: Averaging) -> Result<SplitScores<T>> {
    let as_real = |v: &[usize]| v.iter().map(|&c| T::from_count(c)).collect::<Vec<T>>();
    Ok(SplitScores {
        classification: classification_metrics(y_true, y_pred, averaging)?,
        regression: regression_style_metrics(&as_real(y_true), &as_real(y_pred))?,
    })
}

fn mean_defined<T: Scalar>(v: impl Iterator<Item = Option<T>>) -> Option<T> {
    let v: Vec<T> = v.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

impl<T: Scalar> MetricsRecord<T> {
    /// Field-wise mean over splits, in split order.
    pub fn from_splits(model: &str, phase: Phase, splits: &[SplitScores<T>]) -> Self {
        let col = |f: &dyn Fn(&SplitScores<T>) -> T| mean(&splits.iter().map(f).collect::<Vec<_>>());
        let mse = col(&|s| s.regression.mse);
        MetricsRecord {
            model: model.to_owned(),
            phase,
            accuracy: col(&|s| s.classification.accuracy),
            f1_weighted: col(&|s| s.classification.f1),
            ev: mean_defined(splits.iter().map(|s| s.regression.ev)),
            mse,
            rmse: mse.sqrt(),
            r2: mean_defined(splits.iter().map(|s| s.regression.r2)),
            d2: mean_defined(splits.iter().map(|s| s.regression.d2)),
        }
    }

    fn cells(&self) -> [String; 7] {
        let f = |v: T| format!("{:.3}", v.as_f64());
        let o = |v: Option<T>| v.map_or_else(|| "n/a".to_owned(), f);
        [
            f(self.accuracy),
            f(self.f1_weighted),
            o(self.ev),
            f(self.mse),
            f(self.rmse),
            o(self.r2),
            o(self.d2),
        ]
    }

    pub fn markdown_row(&self) -> String {
        format!("| {} | {} |", self.model, self.cells().join(" | "))
    }

    pub fn latex_row(&self) -> String {
        format!("{} & {} \\\\", self.model, self.cells().join(" & "))
    }
}

pub const TABLE_HEADER: [&str; 8] = ["Model Name", "Accuracy", "F1 Score", "EV", "MSE", "RMSE", "R²", "D² Score"];

/// Trains `spec` on every fold's training rows and scores its test rows.
/// Fold `i` trains with the seed stream `spec.seed/fold[i]`.
pub fn evaluate_splits<T: Scalar>(
    spec: &ModelSpec,
    folds: &[Fold<T>],
    n_classes: usize,
    averaging: Averaging,
) -> Result<Vec<SplitScores<T>>> {
    folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let model = train(&fold_spec(spec, i), &fold.x_train, &fold.y_train, n_classes)?;
            let pred = model.predict(&fold.x_test)?;
            score_predictions(&fold.y_test, &pred, averaging)
        })
        .collect()
}

pub fn fold_spec(spec: &ModelSpec, fold: usize) -> ModelSpec {
    ModelSpec {
        seed: Seed(spec.seed).derive("fold", fold as u64).0,
        ..spec.clone()
    }
}

pub fn evaluate<T: Scalar>(
    spec: &ModelSpec,
    folds: &[Fold<T>],
    n_classes: usize,
    phase: Phase,
    averaging: Averaging,
) -> Result<MetricsRecord<T>> {
    if folds.is_empty() {
        return Err(Error::invalid("no splits to evaluate on"));
    }
    let scores = evaluate_splits(spec, folds, n_classes, averaging)?;
    Ok(MetricsRecord::from_splits(spec.algorithm.code(), phase, &scores))
}
