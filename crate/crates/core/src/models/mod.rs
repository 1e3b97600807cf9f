//! The classifier zoo behind one train / predict / predict-probability
//! contract.

mod bayes;
mod boosting;
mod discriminant;
mod forest;
mod knn;
mod linear;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{argmax, Scalar};
use crate::seed::Seed;

pub use bayes::{GaussianNb, MultinomialNb};
pub use boosting::{AdaBoost, GradientBoosting};
pub use discriminant::{Lda, Qda};
pub use forest::{DecisionTree, Forest};
pub use knn::Knn;
pub use linear::LogisticRegression;

/// Version of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    LR,
    DTC,
    RFC,
    ETC,
    GBC,
    ABC,
    KNN,
    GNB,
    MNB,
    LDA,
    QDA,
}

impl Algorithm {
    /// Report order: the row order of the published comparison tables.
    pub const ALL: [Algorithm; 11] = [
        Algorithm::LR,
        Algorithm::DTC,
        Algorithm::ABC,
        Algorithm::GBC,
        Algorithm::ETC,
        Algorithm::RFC,
        Algorithm::KNN,
        Algorithm::GNB,
        Algorithm::LDA,
        Algorithm::QDA,
        Algorithm::MNB,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Algorithm::LR => "LR",
            Algorithm::DTC => "DTC",
            Algorithm::RFC => "RFC",
            Algorithm::ETC => "ETC",
            Algorithm::GBC => "GBC",
            Algorithm::ABC => "ABC",
            Algorithm::KNN => "KNN",
            Algorithm::GNB => "GNB",
            Algorithm::MNB => "MNB",
            Algorithm::LDA => "LDA",
            Algorithm::QDA => "QDA",
        }
    }

    /// Recognised hyperparameters and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Algorithm::LR => &[
                ("learning_rate", 0.1),
                ("l2", 1e-4),
                ("max_iter", 500.0),
                ("tol", 1e-6),
            ],
            Algorithm::DTC => &[("max_depth", 0.0), ("min_samples_split", 2.0)],
            Algorithm::RFC | Algorithm::ETC => &[
                ("n_trees", 100.0),
                ("max_depth", 0.0),
                ("min_samples_split", 2.0),
                ("max_features", 0.0),
            ],
            Algorithm::GBC => &[
                ("n_rounds", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 3.0),
            ],
            Algorithm::ABC => &[("n_rounds", 50.0), ("learning_rate", 1.0)],
            Algorithm::KNN => &[("k", 5.0)],
            Algorithm::GNB => &[("var_smoothing", 1e-9)],
            Algorithm::MNB => &[("alpha", 1.0)],
            Algorithm::LDA | Algorithm::QDA => &[("ridge", 1e-6)],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        let alias = if upper == "NB" { "GNB" } else { upper.as_str() };
        Algorithm::ALL
            .into_iter()
            .find(|a| a.code() == alias)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

/// Resolved hyperparameters: every recognised key with its effective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    values: BTreeMap<&'static str, f64>,
}

impl Hyper {
    pub fn real(&self, key: &str) -> f64 {
        self.values[key]
    }

    /// Non-negative integer; zero conventionally means "unset".
    pub fn count(&self, key: &str) -> usize {
        self.values[key] as usize
    }

    pub fn optional_count(&self, key: &str) -> Option<usize> {
        Some(self.count(key)).filter(|&v| v > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    /// Validates the override keys against the algorithm's known set.
    pub fn new(algorithm: Algorithm, hyperparameters: BTreeMap<String, f64>, seed: u64) -> Result<Self> {
        let spec = ModelSpec {
            algorithm,
            hyperparameters,
            seed,
        };
        spec.resolve()?;
        Ok(spec)
    }

    pub fn default_for(algorithm: Algorithm, seed: u64) -> Self {
        ModelSpec {
            algorithm,
            hyperparameters: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Result<Self> {
        self.hyperparameters.insert(key.to_owned(), value);
        self.resolve()?;
        Ok(self)
    }

    pub fn resolve(&self) -> Result<Hyper> {
        self.resolve_with(&self.hyperparameters)
    }

    /// Resolves `overrides` against this algorithm's defaults.
    pub fn resolve_with(&self, overrides: &BTreeMap<String, f64>) -> Result<Hyper> {
        let defaults = self.algorithm.defaults();
        let mut problems = Vec::new();
        for (k, v) in overrides {
            match defaults.iter().find(|(name, _)| name == k) {
                None => problems.push(format!(
                    "{}: unknown hyperparameter {k:?} (known: {})",
                    self.algorithm,
                    defaults.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                )),
                Some(_) if !v.is_finite() || *v < 0.0 => {
                    problems.push(format!("{}: {k} must be finite and non-negative", self.algorithm))
                }
                Some(_) => {}
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let values = defaults
            .iter()
            .map(|&(k, d)| (k, overrides.get(k).copied().unwrap_or(d)))
            .collect();
        Ok(Hyper { values })
    }
}

/// Anything that maps feature rows onto class-probability rows.
pub trait Classifier<T: Scalar> {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;

    /// Probabilities for one row; `out` has `n_classes` entries.
    fn row_proba(&self, row: &[T], out: &mut [T]);

    fn predict_proba(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        x.ensure_cols(self.n_features())?;
        let mut p = Matrix::zeros(x.rows(), self.n_classes());
        for i in 0..x.rows() {
            self.row_proba(x.row(i), p.row_mut(i));
        }
        Ok(p)
    }

    /// Argmax of [`Classifier::predict_proba`], ties to the lowest code.
    fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.row_iter().map(argmax).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "snake_case")]
pub enum FittedState<T> {
    Logistic(LogisticRegression<T>),
    Tree(DecisionTree<T>),
    Forest(Forest<T>),
    GradientBoosting(GradientBoosting<T>),
    AdaBoost(AdaBoost<T>),
    Knn(Knn<T>),
    GaussianNb(GaussianNb<T>),
    MultinomialNb(MultinomialNb<T>),
    Lda(Lda<T>),
    Qda(Qda<T>),
}

impl<T: Scalar> FittedState<T> {
    fn inner(&self) -> &dyn Classifier<T> {
        match self {
            FittedState::Logistic(m) => m,
            FittedState::Tree(m) => m,
            FittedState::Forest(m) => m,
            FittedState::GradientBoosting(m) => m,
            FittedState::AdaBoost(m) => m,
            FittedState::Knn(m) => m,
            FittedState::GaussianNb(m) => m,
            FittedState::MultinomialNb(m) => m,
            FittedState::Lda(m) => m,
            FittedState::Qda(m) => m,
        }
    }
}

/// A fitted model of any algorithm; immutable once trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T> {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub n_classes: usize,
    pub n_features: usize,
    pub state: FittedState<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn algorithm(&self) -> Algorithm {
        self.spec.algorithm
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

impl<T: Scalar> Classifier<T> for TrainedModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        self.state.inner().row_proba(row, out)
    }
}

pub(crate) fn check_training<T: Scalar>(
    algorithm: Algorithm,
    x: &Matrix<T>,
    y: &[usize],
    n_classes: usize,
) -> Result<()> {
    let fail = |reason: String| Error::Degenerate {
        algorithm: algorithm.code(),
        reason,
    };
    if x.rows() != y.len() {
        return Err(fail(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if n_classes < 2 {
        return Err(fail("at least two classes are required".into()));
    }
    if y.len() < n_classes {
        return Err(fail(format!("{} rows for {n_classes} classes", y.len())));
    }
    let counts = crate::data::class_counts(y, n_classes.max(y.iter().max().map_or(0, |m| m + 1)));
    if counts.len() > n_classes {
        return Err(fail(format!("label outside 0..{n_classes}")));
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(fail(format!("class {c} has no training rows")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite feature value".into()));
    }
    Ok(())
}

/// Fits `spec` on `(x, y)`; all randomness comes from `spec.seed`.
pub fn train<T: Scalar>(
    spec: &ModelSpec,
    x: &Matrix<T>,
    y: &[usize],
    n_classes: usize,
) -> Result<TrainedModel<T>> {
    let hp = spec.resolve()?;
    check_training(spec.algorithm, x, y, n_classes)?;
    let seed = Seed(spec.seed);
    let state = match spec.algorithm {
        Algorithm::LR => FittedState::Logistic(LogisticRegression::fit(x, y, n_classes, &hp)?.0),
        Algorithm::DTC => FittedState::Tree(DecisionTree::fit(x, y, n_classes, &hp, seed)),
        Algorithm::RFC => FittedState::Forest(Forest::fit_random(x, y, n_classes, &hp, seed)),
        Algorithm::ETC => FittedState::Forest(Forest::fit_extra(x, y, n_classes, &hp, seed)),
        Algorithm::GBC => {
            FittedState::GradientBoosting(GradientBoosting::fit(x, y, n_classes, &hp)?.0)
        }
        Algorithm::ABC => FittedState::AdaBoost(AdaBoost::fit(x, y, n_classes, &hp, seed)),
        Algorithm::KNN => FittedState::Knn(Knn::fit(x, y, n_classes, &hp)?),
        Algorithm::GNB => FittedState::GaussianNb(GaussianNb::fit(x, y, n_classes, &hp)),
        Algorithm::MNB => FittedState::MultinomialNb(MultinomialNb::fit(x, y, n_classes, &hp)),
        Algorithm::LDA => FittedState::Lda(Lda::fit(x, y, n_classes, &hp)?),
        Algorithm::QDA => FittedState::Qda(Qda::fit(x, y, n_classes, &hp)?),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_classes,
        n_features: x.cols(),
        state,
    })
}

/// Per-class row index lists.
pub(crate) fn class_members(y: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        m[c].push(i);
    }
    m
}
