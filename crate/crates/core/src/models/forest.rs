use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Presorted, Splitter, Target, Tree};
use super::{Classifier, Hyper};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{argmax, Scalar};
use crate::seed::Seed;

/// Single CART classifier (Gini, midpoint thresholds, grown to purity by
/// default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DecisionTree<T> {
    pub tree: Tree<T>,
    n_features: usize,
    n_classes: usize,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper, seed: Seed) -> Self {
        let params = GrowParams {
            max_depth: hp.optional_count("max_depth"),
            min_samples_split: hp.count("min_samples_split"),
            max_features: None,
            splitter: Splitter::Best,
        };
        let tree = grow(
            x,
            &Presorted::new(x),
            Target::Classes { y, n_classes },
            &vec![T::one(); x.rows()],
            params,
            &mut seed.rng(),
        );
        DecisionTree {
            tree,
            n_features: x.cols(),
            n_classes,
        }
    }
}

impl<T: Scalar> Classifier<T> for DecisionTree<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        out.copy_from_slice(self.tree.leaf_value(row));
    }
}

/// Tree ensemble with hard voting: each tree votes for its leaf's majority
/// class and the probability of a class is its vote fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
    n_features: usize,
    n_classes: usize,
}

fn sqrt_features(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

impl<T: Scalar> Forest<T> {
    pub fn from_trees(trees: Vec<Tree<T>>, n_features: usize, n_classes: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        Ok(Forest {
            trees,
            n_features,
            n_classes,
        })
    }

    /// Random forest: bootstrap rows, `⌊√d⌋` candidate features per node.
    pub fn fit_random(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper, seed: Seed) -> Self {
        Self::fit_with(x, y, n_classes, hp, seed, Splitter::Best, true)
    }

    /// Extremely randomised trees: all rows, one random threshold per
    /// candidate feature.
    pub fn fit_extra(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper, seed: Seed) -> Self {
        Self::fit_with(x, y, n_classes, hp, seed, Splitter::Random, false)
    }

    fn fit_with(
        x: &Matrix<T>,
        y: &[usize],
        n_classes: usize,
        hp: &Hyper,
        seed: Seed,
        splitter: Splitter,
        bootstrap: bool,
    ) -> Self {
        let n = x.rows();
        let params = GrowParams {
            max_depth: hp.optional_count("max_depth"),
            min_samples_split: hp.count("min_samples_split"),
            max_features: Some(hp.optional_count("max_features").unwrap_or_else(|| sqrt_features(x.cols()))),
            splitter,
        };
        let presorted = Presorted::new(x);
        let n_trees = hp.count("n_trees").max(1);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed.derive("tree", t as u64).rng();
                let weights = if bootstrap {
                    let mut w = vec![T::zero(); n];
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += T::one();
                    }
                    w
                } else {
                    vec![T::one(); n]
                };
                grow(x, &presorted, Target::Classes { y, n_classes }, &weights, params, &mut rng)
            })
            .collect();
        Forest {
            trees,
            n_features: x.cols(),
            n_classes,
        }
    }
}

impl<T: Scalar> Classifier<T> for Forest<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        out.fill(T::zero());
        for t in &self.trees {
            out[argmax(t.leaf_value(row))] += T::one();
        }
        let n = T::from_count(self.trees.len());
        out.iter_mut().for_each(|v| *v /= n);
    }
}
