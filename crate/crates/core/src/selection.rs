//! Global feature ranking from local explanations, top-k selection, and the
//! before/after retraining comparison.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::lime::{Explanation, LimeConfig, LimeExplainer};
use crate::metrics::{evaluate, fold_spec, Averaging, MetricsRecord, Phase};
use crate::models::{train, Classifier, ModelSpec};
use crate::preprocess::{prepare_folds, PrepOptions, Prepared};
use crate::scalar::Scalar;
use crate::seed::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureImportance<T> {
    pub index: usize,
    pub name: String,
    /// Mean absolute explanation weight.
    pub score: T,
    /// 1 is the most important.
    pub rank: usize,
    /// Fraction of explanations whose signed weight was `>= 0`.
    pub positive_share: T,
}

/// Entries in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureRanking<T> {
    pub features: Vec<FeatureImportance<T>>,
}

impl<T: Scalar> FeatureRanking<T> {
    /// Builds ranks from scores: descending score, ties to the lower index.
    pub fn from_scores(names: &[String], scores: Vec<T>, positive_share: Vec<T>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b)));
        let mut rank = vec![0; scores.len()];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r + 1;
        }
        let features = scores
            .into_iter()
            .zip(positive_share)
            .enumerate()
            .map(|(j, (score, positive_share))| FeatureImportance {
                index: j,
                name: names[j].clone(),
                score,
                rank: rank[j],
                positive_share,
            })
            .collect();
        FeatureRanking { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature indices from rank 1 downwards.
    pub fn by_rank(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).collect();
        v.sort_by_key(|&j| self.features[j].rank);
        v
    }
}

/// Mean `|weight|` per feature across explanations.
///
/// Magnitudes are summed in sorted order, so the result does not depend on
/// the order of `explanations`.
pub fn aggregate_importance<T: Scalar>(
    explanations: &[Explanation<T>],
    feature_names: &[String],
) -> Result<FeatureRanking<T>> {
    if explanations.is_empty() {
        return Err(Error::invalid("no explanations to aggregate"));
    }
    let d = feature_names.len();
    if let Some(e) = explanations.iter().find(|e| e.weights.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: e.weights.len(),
        });
    }
    let m = T::from_count(explanations.len());
    let mut scores = Vec::with_capacity(d);
    let mut shares = Vec::with_capacity(d);
    for j in 0..d {
        let mut mags: Vec<T> = explanations.iter().map(|e| e.weights[j].abs()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        scores.push(mags.into_iter().sum::<T>() / m);
        let positive = explanations.iter().filter(|e| e.weights[j] >= T::zero()).count();
        shares.push(T::from_count(positive) / m);
    }
    Ok(FeatureRanking::from_scores(feature_names, scores, shares))
}

/// The `min(k, d)` best-ranked features, in schema order.
pub fn select_top_k<T: Scalar>(ranking: &FeatureRanking<T>, k: usize) -> Vec<usize> {
    let mut top: Vec<usize> = ranking.by_rank().into_iter().take(k).collect();
    top.sort_unstable();
    top
}

/// Keeps only `features`, in schema order, re-indexing the schema.
pub fn reduce_dataset<T: Scalar>(data: &Dataset<T>, features: &[usize]) -> Result<Dataset<T>> {
    let d = data.n_features();
    let mut keep = features.to_vec();
    keep.sort_unstable();
    if let Some(&bad) = keep.iter().find(|&&j| j >= d) {
        return Err(Error::invalid(format!("feature index {bad} outside 0..{d}")));
    }
    if let Some(w) = keep.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("feature index {} selected twice", w[0])));
    }
    let schema = keep
        .iter()
        .enumerate()
        .map(|(i, &j)| ColumnSchema {
            index: i,
            ..data.schema[j].clone()
        })
        .collect();
    Dataset::new(data.x.select_columns(&keep), data.y.clone(), schema, data.classes.clone())
}

/// Index of the best record: highest accuracy, then highest F1, then the
/// earliest.
pub fn best_model<T: Scalar>(records: &[MetricsRecord<T>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let b = &records[b];
                r.accuracy > b.accuracy || (r.accuracy == b.accuracy && r.f1_weighted > b.f1_weighted)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Picks `m` positions stratified by predicted class, proportional to the
/// class shares with largest-remainder rounding. Returned sorted.
pub fn sample_by_prediction(predicted: &[usize], n_classes: usize, m: usize, seed: Seed) -> Vec<usize> {
    let n = predicted.len();
    if m >= n {
        return (0..n).collect();
    }
    let groups = crate::models::class_members(predicted, n_classes);
    let mut quota: Vec<usize> = groups.iter().map(|g| g.len() * m / n).collect();
    let mut rest: Vec<usize> = (0..n_classes).collect();
    // remainder numerators are comparable as g·m mod n
    rest.sort_by(|&a, &b| {
        let ra = groups[a].len() * m % n;
        let rb = groups[b].len() * m % n;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let mut short = m - quota.iter().sum::<usize>();
    for &c in &rest {
        if short > 0 && quota[c] < groups[c].len() {
            quota[c] += 1;
            short -= 1;
        }
    }
    let mut rng = seed.rng();
    let mut picked = Vec::with_capacity(m);
    for (mut g, q) in groups.into_iter().zip(quota) {
        g.shuffle(&mut rng);
        picked.extend_from_slice(&g[..q]);
    }
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub prep: PrepOptions,
    pub lime: LimeConfig,
    pub k_features: usize,
    /// Number of test instances explained.
    pub explain_instances: usize,
    pub averaging: Averaging,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            prep: PrepOptions::default(),
            lime: LimeConfig::default(),
            k_features: 10,
            explain_instances: 100,
            averaging: Averaging::Weighted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelComparison<T> {
    pub model: String,
    pub best: bool,
    pub before: MetricsRecord<T>,
    pub after: MetricsRecord<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ComparisonReport<T> {
    pub best_model: String,
    pub models: Vec<ModelComparison<T>>,
    pub selected_features: Vec<String>,
    pub explained_instances: usize,
    pub ranking: FeatureRanking<T>,
    #[serde(skip)]
    pub explanations: Vec<Explanation<T>>,
}

impl<T: Scalar> ComparisonReport<T> {
    pub fn best(&self) -> &ModelComparison<T> {
        self.models.iter().find(|m| m.best).expect("one model is flagged best")
    }
}

/// Evaluates every spec on `data`.
pub fn evaluate_all<T: Scalar>(
    specs: &[ModelSpec],
    prepared: &Prepared<T>,
    n_classes: usize,
    phase: Phase,
    averaging: Averaging,
) -> Result<Vec<MetricsRecord<T>>> {
    specs
        .par_iter()
        .map(|s| evaluate(s, &prepared.folds, n_classes, phase, averaging))
        .collect()
}

/// Explains the fold-0 model of `spec` on a stratified sample of fold-0
/// test rows. Instance indices refer to rows of the prepared table.
pub fn explain_best<T: Scalar>(
    spec: &ModelSpec,
    data: &Dataset<T>,
    prepared: &Prepared<T>,
    opts: &CompareOptions,
) -> Result<Vec<Explanation<T>>> {
    let fold = &prepared.folds[0];
    let rows = &prepared.splits[0].test;
    let model = train(&fold_spec(spec, 0), &fold.x_train, &fold.y_train, data.n_classes())?;
    let predicted = model.predict(&fold.x_test)?;
    let chosen = sample_by_prediction(
        &predicted,
        data.n_classes(),
        opts.explain_instances,
        Seed(opts.seed).derive("explain-sample", 0),
    );
    let explainer = LimeExplainer::new(
        &fold.x_train,
        &data.kinds(),
        opts.lime.clone(),
        Seed(opts.seed).derive("explain", 0),
    )?;
    chosen
        .par_iter()
        .map(|&i| explainer.explain(&model, fold.x_test.row(i), rows[i]))
        .collect()
}

/// Evaluates all specs, explains the best, keeps the top-k features and
/// evaluates all specs again on the reduced table over the same splits.
pub fn retrain_compare<T: Scalar>(
    specs: &[ModelSpec],
    data: &Dataset<T>,
    opts: &CompareOptions,
) -> Result<ComparisonReport<T>> {
    if specs.is_empty() {
        return Err(Error::invalid("no models to compare"));
    }
    if opts.explain_instances == 0 {
        return Err(Error::invalid("at least one instance must be explained"));
    }
    let c = data.n_classes();
    let seed = Seed(opts.seed);
    let prepared = prepare_folds(data, &opts.prep, seed)?;
    let before = evaluate_all(specs, &prepared, c, Phase::Before, opts.averaging)?;
    let best = best_model(&before).expect("specs is non-empty");

    let explanations = explain_best(&specs[best], data, &prepared, opts)?;
    let names = data.feature_names();
    let ranking = aggregate_importance(&explanations, &names)?;
    if opts.k_features > data.n_features() {
        log::warn!(
            "k_features = {} exceeds the {} available features; keeping all",
            opts.k_features,
            data.n_features()
        );
    }
    let selected = select_top_k(&ranking, opts.k_features);
    let reduced = reduce_dataset(data, &selected)?;
    let prepared_after = prepare_folds(&reduced, &opts.prep, seed)?;
    let after = evaluate_all(specs, &prepared_after, c, Phase::After, opts.averaging)?;

    let models = before
        .into_iter()
        .zip(after)
        .enumerate()
        .map(|(i, (before, after))| ModelComparison {
            model: before.model.clone(),
            best: i == best,
            before,
            after,
        })
        .collect();
    Ok(ComparisonReport {
        best_model: specs[best].algorithm.code().to_owned(),
        models,
        selected_features: selected.iter().map(|&j| names[j].clone()).collect(),
        explained_instances: explanations.len(),
        ranking,
        explanations,
    })
}
