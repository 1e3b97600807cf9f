use serde::{Deserialize, Serialize};

use super::tree::{grow, grow_binned, Binned, GrowParams, Presorted, Splitter, Target, Tree};
use super::{Classifier, Hyper};
use crate::data::class_counts;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::{argmax, softmax_in_place, Scalar};
use crate::seed::Seed;

/// Multiclass gradient boosting on the softmax cross-entropy. Each round
/// fits one least-squares regression tree per class to the negative
/// gradient `onehot - p` and adds it, scaled by the learning rate, to that
/// class's score. Scores start at the log class priors. Split search runs
/// over at most 256 bins per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GradientBoosting<T> {
    pub init: Vec<T>,
    pub learning_rate: T,
    /// `rounds[m][k]` is the class-`k` tree of round `m`.
    pub rounds: Vec<Vec<Tree<T>>>,
    n_features: usize,
}

/// Mean negative log-likelihood of `y` under softmax(`scores`).
fn deviance<T: Scalar>(scores: &Matrix<T>, y: &[usize]) -> T {
    let mut p = vec![T::zero(); scores.cols()];
    let total: T = scores
        .row_iter()
        .zip(y)
        .map(|(s, &label)| {
            p.copy_from_slice(s);
            softmax_in_place(&mut p);
            -p[label].max(T::min_positive_value()).ln()
        })
        .sum();
    total / T::from_count(y.len())
}

impl<T: Scalar> GradientBoosting<T> {
    /// Returns the model and the training deviance before the first round
    /// and after each round.
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Result<(Self, Vec<T>)> {
        let n = x.rows();
        let lr = T::lit(hp.real("learning_rate"));
        let max_depth = hp.optional_count("max_depth");
        let nf = T::from_count(n);
        let init: Vec<T> = class_counts(y, n_classes)
            .into_iter()
            .map(|c| (T::from_count(c) / nf).ln())
            .collect();
        let mut scores = Matrix::zeros(n, n_classes);
        for i in 0..n {
            scores.row_mut(i).copy_from_slice(&init);
        }
        let binned = Binned::new(x, 256);
        let mut trace = vec![deviance(&scores, y)];
        let mut rounds = Vec::with_capacity(hp.count("n_rounds"));
        let mut probs = Matrix::zeros(n, n_classes);
        let mut residual = vec![T::zero(); n];
        for _ in 0..hp.count("n_rounds") {
            for i in 0..n {
                let p = probs.row_mut(i);
                p.copy_from_slice(scores.row(i));
                softmax_in_place(p);
            }
            let mut trees = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                for (i, r) in residual.iter_mut().enumerate() {
                    let target = if y[i] == k { T::one() } else { T::zero() };
                    *r = target - probs[(i, k)];
                }
                let tree = grow_binned(&binned, &residual, max_depth, 2);
                trees.push(tree);
            }
            for (k, tree) in trees.iter().enumerate() {
                for i in 0..n {
                    scores[(i, k)] += lr * tree.leaf_value(x.row(i))[0];
                }
            }
            rounds.push(trees);
            trace.push(deviance(&scores, y));
        }
        Ok((
            GradientBoosting {
                init,
                learning_rate: lr,
                rounds,
                n_features: x.cols(),
            },
            trace,
        ))
    }
}

impl<T: Scalar> Classifier<T> for GradientBoosting<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.init.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.init);
        for trees in &self.rounds {
            for (o, t) in out.iter_mut().zip(trees) {
                *o += self.learning_rate * t.leaf_value(row)[0];
            }
        }
        softmax_in_place(out);
    }
}

/// SAMME boosting of depth-1 weighted-Gini stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdaBoost<T> {
    pub stumps: Vec<Tree<T>>,
    pub alphas: Vec<T>,
    n_classes: usize,
    n_features: usize,
}

impl<T: Scalar> AdaBoost<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper, seed: Seed) -> Self {
        let n = x.rows();
        let lr = T::lit(hp.real("learning_rate"));
        let c = T::from_count(n_classes);
        let chance_error = (c - T::one()) / c;
        let params = GrowParams {
            max_depth: Some(1),
            min_samples_split: 2,
            max_features: None,
            splitter: Splitter::Best,
        };
        let presorted = Presorted::new(x);
        let mut rng = seed.rng();
        let mut w = vec![T::one() / T::from_count(n); n];
        let mut stumps = Vec::new();
        let mut alphas = Vec::new();
        for _ in 0..hp.count("n_rounds") {
            let stump = grow(x, &presorted, Target::Classes { y, n_classes }, &w, params, &mut rng);
            let miss: Vec<bool> = x
                .row_iter()
                .zip(y)
                .map(|(r, &label)| argmax(stump.leaf_value(r)) != label)
                .collect();
            let total: T = w.iter().copied().sum();
            let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, &wi)| wi).sum::<T>() / total;
            if err >= chance_error {
                if stumps.is_empty() {
                    // nothing better than chance exists; keep one voter
                    stumps.push(stump);
                    alphas.push(T::one());
                }
                break;
            }
            let clamped = err.max(T::epsilon());
            let alpha = lr * (((T::one() - clamped) / clamped).ln() + (c - T::one()).ln());
            stumps.push(stump);
            alphas.push(alpha);
            if err <= T::zero() {
                break;
            }
            let boost = alpha.exp();
            for (wi, &m) in w.iter_mut().zip(&miss) {
                if m {
                    *wi *= boost;
                }
            }
            let total: T = w.iter().copied().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
        }
        AdaBoost {
            stumps,
            alphas,
            n_classes,
            n_features: x.cols(),
        }
    }
}

impl<T: Scalar> Classifier<T> for AdaBoost<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        out.fill(T::zero());
        for (s, &a) in self.stumps.iter().zip(&self.alphas) {
            out[argmax(s.leaf_value(row))] += a;
        }
        let norm: T = self.alphas.iter().copied().sum::<T>() * (T::from_count(self.n_classes) - T::one());
        out.iter_mut().for_each(|v| *v /= norm);
        softmax_in_place(out);
    }
}
