//! Local surrogate explanations for tabular classifiers.
//!
//! An instance is perturbed in a discretised space: every feature either keeps
//! the instance's quantile bin (or category) or jumps to another one drawn by
//! training frequency. Each perturbed row is summarised by a binary vector
//! recording which features kept their bin. A weighted ridge regression on
//! those binary vectors, with an exponential kernel on their distance to the
//! all-ones anchor, approximates the black-box probability of the predicted
//! class; its largest coefficients are the explanation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::matrix::{Cholesky, Matrix};
use crate::models::Classifier;
use crate::scalar::{argmax, Scalar};
use crate::seed::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 · √d` when unset.
    pub kernel_width: Option<f64>,
    pub ridge_alpha: f64,
    pub k_features: usize,
    pub n_bins: usize,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            ridge_alpha: 1.0,
            k_features: 10,
            n_bins: 4,
        }
    }
}

impl LimeConfig {
    pub fn width(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }

    /// Every violated constraint, for a feature space of width `d`.
    pub fn violations(&self, d: usize) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_samples < d + 2 {
            v.push(format!("lime.n_samples = {} must be at least d + 2 = {}", self.n_samples, d + 2));
        }
        let w = self.width(d);
        if !(w.is_finite() && w >= 1e-12) {
            v.push(format!("lime.kernel_width = {w} must be at least 1e-12"));
        }
        if !(self.ridge_alpha.is_finite() && self.ridge_alpha >= 0.0) {
            v.push(format!("lime.ridge_alpha = {} must be finite and >= 0", self.ridge_alpha));
        }
        if self.k_features == 0 {
            v.push("lime.k_features must be at least 1".into());
        }
        if self.n_bins < 2 {
            v.push(format!("lime.n_bins = {} must be at least 2", self.n_bins));
        }
        v
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let v = self.violations(d);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum FeatureBins<T> {
    Numeric {
        /// Interior bin edges at evenly spaced percentiles; non-decreasing.
        boundaries: Vec<T>,
        min: T,
        max: T,
        /// Training rows per bin.
        frequency: Vec<usize>,
    },
    Categorical {
        values: Vec<T>,
        frequency: Vec<usize>,
    },
}

impl<T: Scalar> FeatureBins<T> {
    /// Bin of `x`: the number of boundaries strictly below it. For
    /// categorical features, the index of the value, if seen in training.
    pub fn bin(&self, x: T) -> Option<usize> {
        match self {
            FeatureBins::Numeric { boundaries, .. } => Some(boundaries.iter().filter(|&&b| x > b).count()),
            FeatureBins::Categorical { values, .. } => values.iter().position(|&v| v == x),
        }
    }

    fn frequency(&self) -> &[usize] {
        match self {
            FeatureBins::Numeric { frequency, .. } | FeatureBins::Categorical { frequency, .. } => frequency,
        }
    }

    fn bounds(&self, bin: usize) -> (T, T) {
        match self {
            FeatureBins::Numeric {
                boundaries, min, max, ..
            } => {
                let lo = if bin == 0 { *min } else { boundaries[bin - 1] };
                let hi = boundaries.get(bin).copied().unwrap_or(*max);
                (lo.min(*max), hi.max(*min))
            }
            FeatureBins::Categorical { values, .. } => (values[bin], values[bin]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Discretizer<T> {
    pub features: Vec<FeatureBins<T>>,
}

/// Percentile `q ∈ [0, 1]` of sorted data with linear interpolation.
pub fn percentile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn fit_discretizer<T: Scalar>(x_train: &Matrix<T>, kinds: &[ColumnKind], n_bins: usize) -> Result<Discretizer<T>> {
    x_train.ensure_cols(kinds.len())?;
    if x_train.rows() == 0 {
        return Err(Error::invalid("cannot discretise an empty training set"));
    }
    if n_bins < 2 {
        return Err(Error::invalid("at least two bins are required"));
    }
    let features = kinds
        .iter()
        .enumerate()
        .map(|(j, kind)| {
            let mut col = x_train.column(j);
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            match kind {
                ColumnKind::Numeric => {
                    let boundaries: Vec<T> = (1..n_bins)
                        .map(|b| percentile(&col, b as f64 / n_bins as f64))
                        .collect();
                    let mut bins = FeatureBins::Numeric {
                        boundaries,
                        min: col[0],
                        max: col[col.len() - 1],
                        frequency: vec![0; n_bins],
                    };
                    let counts: Vec<usize> = col.iter().map(|&v| bins.bin(v).unwrap_or(0)).collect();
                    if let FeatureBins::Numeric { frequency, .. } = &mut bins {
                        counts.into_iter().for_each(|b| frequency[b] += 1);
                    }
                    bins
                }
                ColumnKind::Categorical => {
                    let mut values: Vec<T> = Vec::new();
                    let mut frequency = Vec::new();
                    for v in col {
                        if values.last() == Some(&v) {
                            *frequency.last_mut().expect("paired with values") += 1;
                        } else {
                            values.push(v);
                            frequency.push(1);
                        }
                    }
                    FeatureBins::Categorical { values, frequency }
                }
            }
        })
        .collect();
    Ok(Discretizer { features })
}

/// Draws an index `≠ exclude` with probability proportional to `freq`.
fn draw_alternative<R: Rng + ?Sized>(freq: &[usize], exclude: Option<usize>, rng: &mut R) -> Option<usize> {
    let total: usize = freq
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(_, &f)| f)
        .sum();
    if total == 0 {
        return None;
    }
    let mut ticket = rng.random_range(0..total);
    for (i, &f) in freq.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        if ticket < f {
            return Some(i);
        }
        ticket -= f;
    }
    unreachable!("ticket is below the total")
}

/// Perturbed rows and their binary interpretable representation. Row 0 of
/// both is the instance itself (all ones in `z`).
pub fn perturb<T: Scalar, R: Rng + ?Sized>(
    instance: &[T],
    disc: &Discretizer<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let d = disc.features.len();
    if instance.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: instance.len(),
        });
    }
    let n = n_samples.max(1);
    let mut x = Matrix::zeros(n, d);
    let mut z = Matrix::zeros(n, d);
    x.row_mut(0).copy_from_slice(instance);
    z.row_mut(0).fill(T::one());
    for i in 1..n {
        for (j, bins) in disc.features.iter().enumerate() {
            let own = bins.bin(instance[j]);
            let keep = rng.random_bool(0.5);
            let alternative = if keep {
                None
            } else {
                draw_alternative(bins.frequency(), own, rng)
            };
            let (bin, kept) = match (alternative, own) {
                (Some(b), _) => (b, false),
                (None, Some(b)) => (b, true),
                // unseen category with nothing to switch to: keep the value
                (None, None) => {
                    x[(i, j)] = instance[j];
                    z[(i, j)] = T::one();
                    continue;
                }
            };
            let value = match bins {
                FeatureBins::Numeric { .. } => {
                    let (lo, hi) = bins.bounds(bin);
                    lo + T::lit(rng.random::<f64>()) * (hi - lo)
                }
                FeatureBins::Categorical { .. } if kept => instance[j],
                FeatureBins::Categorical { .. } => bins.bounds(bin).0,
            };
            x[(i, j)] = value;
            z[(i, j)] = if kept { T::one() } else { T::zero() };
        }
    }
    Ok((x, z))
}

/// `exp(-D² / width²)` with `D` the Euclidean distance from each row of `z`
/// to the all-ones anchor.
pub fn kernel_weights<T: Scalar>(z: &Matrix<T>, width: T) -> Vec<T> {
    let w2 = width * width;
    z.row_iter()
        .map(|r| {
            let d2: T = r.iter().map(|&v| (T::one() - v) * (T::one() - v)).sum();
            (-d2 / w2).exp()
        })
        .collect()
}

/// Weighted ridge fit of the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SurrogateFit<T> {
    pub intercept: T,
    /// All coefficients of the ridge solution.
    pub dense: Vec<T>,
    /// `dense` with all but the `k` largest magnitudes zeroed.
    pub sparse: Vec<T>,
    /// Weighted R² of the dense fit.
    pub score: T,
}

/// Solves `(ZcᵀWZc + αI) β = ZcᵀW yc` on weight-centred data, so the
/// intercept `ȳ - z̄ᵀβ` is not penalised.
pub fn fit_surrogate<T: Scalar>(
    z: &Matrix<T>,
    target: &[T],
    weights: &[T],
    ridge_alpha: T,
    k_features: usize,
) -> Result<SurrogateFit<T>> {
    let (n, d) = (z.rows(), z.cols());
    if target.len() != n || weights.len() != n {
        return Err(Error::invalid(format!(
            "surrogate inputs disagree: {n} rows, {} targets, {} weights",
            target.len(),
            weights.len()
        )));
    }
    let wsum: T = weights.iter().copied().sum();
    if !(wsum > T::zero()) {
        return Err(Error::invalid("surrogate weights sum to zero"));
    }
    let y_bar = if target.iter().all(|&y| y == target[0]) {
        target[0]
    } else {
        weights.iter().zip(target).map(|(&w, &y)| w * y).sum::<T>() / wsum
    };
    let mut z_bar = vec![T::zero(); d];
    for (r, &w) in z.row_iter().zip(weights) {
        for (m, &v) in z_bar.iter_mut().zip(r) {
            *m += w * v;
        }
    }
    z_bar.iter_mut().for_each(|m| *m /= wsum);

    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![T::zero(); d];
    let mut zc = vec![T::zero(); d];
    for ((r, &w), &y) in z.row_iter().zip(weights).zip(target) {
        for j in 0..d {
            zc[j] = r[j] - z_bar[j];
        }
        let yc = y - y_bar;
        for a in 0..d {
            let wa = w * zc[a];
            rhs[a] += wa * yc;
            for b in 0..=a {
                gram[(a, b)] += wa * zc[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += ridge_alpha;
    }

    let y_spread: T = weights
        .iter()
        .zip(target)
        .map(|(&w, &y)| w * (y - y_bar) * (y - y_bar))
        .sum();
    let constant = y_spread == T::zero();
    let dense = if constant {
        // constant target: the zero vector solves any consistent system
        vec![T::zero(); d]
    } else {
        let chol = Cholesky::new(&gram).map_err(|_| {
            Error::Singular(if ridge_alpha > T::zero() {
                "surrogate normal equations are singular".into()
            } else {
                "surrogate normal equations are singular; use ridge_alpha > 0".into()
            })
        })?;
        chol.solve(&rhs)
    };
    let intercept = y_bar - dense.iter().zip(&z_bar).map(|(&b, &m)| b * m).sum::<T>();

    let ss_res: T = z
        .row_iter()
        .zip(weights)
        .zip(target)
        .map(|((r, &w), &y)| {
            let fit = intercept + r.iter().zip(&dense).map(|(&v, &b)| v * b).sum::<T>();
            w * (y - fit) * (y - fit)
        })
        .sum();
    let score = if y_spread > T::zero() {
        T::one() - ss_res / y_spread
    } else {
        T::one()
    };

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| dense[b].abs().partial_cmp(&dense[a].abs()).expect("finite").then(a.cmp(&b)));
    let mut sparse = vec![T::zero(); d];
    for &j in order.iter().take(k_features) {
        sparse[j] = dense[j];
    }
    Ok(SurrogateFit {
        intercept,
        dense,
        sparse,
        score,
    })
}

/// One local explanation of the model's predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Explanation<T> {
    pub instance: usize,
    pub class: usize,
    pub intercept: T,
    /// Signed surrogate coefficients; at most `k_features` are non-zero.
    pub weights: Vec<T>,
    /// Weighted R² of the surrogate.
    pub score: T,
    /// Black-box probability of `class` at the instance.
    pub probability: T,
}

#[derive(Serialize)]
struct WeightEntry<'a> {
    feature: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct ExplanationView<'a> {
    instance: usize,
    class: &'a str,
    probability: f64,
    intercept: f64,
    score: f64,
    weights: Vec<WeightEntry<'a>>,
}

impl<T: Scalar> Explanation<T> {
    /// Non-zero `(feature, weight)` pairs, largest magnitude first.
    pub fn ranked(&self) -> Vec<(usize, T)> {
        let mut v: Vec<(usize, T)> = self
            .weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != T::zero())
            .collect();
        v.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).expect("finite").then(a.0.cmp(&b.0)));
        v
    }

    pub fn to_json(&self, feature_names: &[String], class_names: &[String]) -> serde_json::Value {
        let view = ExplanationView {
            instance: self.instance,
            class: class_names.get(self.class).map_or("?", String::as_str),
            probability: self.probability.as_f64(),
            intercept: self.intercept.as_f64(),
            score: self.score.as_f64(),
            weights: self
                .ranked()
                .into_iter()
                .map(|(j, w)| WeightEntry {
                    feature: &feature_names[j],
                    weight: w.as_f64(),
                })
                .collect(),
        };
        serde_json::to_value(view).expect("plain struct serialises")
    }
}

/// Everything the surrogate is fitted on, exposed for inspection.
#[derive(Debug, Clone)]
pub struct PerturbationSet<T> {
    pub class: usize,
    pub probability: T,
    pub x: Matrix<T>,
    pub z: Matrix<T>,
    pub target: Vec<T>,
    pub weights: Vec<T>,
}

/// Discretizer fitted once on training data, reused across instances.
#[derive(Debug, Clone)]
pub struct LimeExplainer<T> {
    pub discretizer: Discretizer<T>,
    pub config: LimeConfig,
    pub seed: Seed,
}

impl<T: Scalar> LimeExplainer<T> {
    pub fn new(x_train: &Matrix<T>, kinds: &[ColumnKind], config: LimeConfig, seed: Seed) -> Result<Self> {
        config.validate(kinds.len())?;
        Ok(LimeExplainer {
            discretizer: fit_discretizer(x_train, kinds, config.n_bins)?,
            config,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.discretizer.features.len()
    }

    pub fn instance_seed(&self, index: usize) -> Seed {
        self.seed.derive("instance", index as u64)
    }

    pub fn perturbation_set<M: Classifier<T> + ?Sized>(
        &self,
        model: &M,
        instance: &[T],
        seed: Seed,
    ) -> Result<PerturbationSet<T>> {
        let d = self.n_features();
        if model.n_features() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: model.n_features(),
            });
        }
        let own = model.predict_proba(&Matrix::from_vec(1, d, instance.to_vec())?)?;
        let class = argmax(own.row(0));
        let (x, z) = perturb(instance, &self.discretizer, self.config.n_samples, &mut seed.rng())?;
        let proba = model.predict_proba(&x)?;
        let target = proba.column(class);
        let weights = kernel_weights(&z, T::lit(self.config.width(d)));
        Ok(PerturbationSet {
            class,
            probability: own[(0, class)],
            x,
            z,
            target,
            weights,
        })
    }

    /// Explains `model`'s predicted class at `instance`; draws from the
    /// stream `seed/instance[index]`.
    pub fn explain<M: Classifier<T> + ?Sized>(&self, model: &M, instance: &[T], index: usize) -> Result<Explanation<T>> {
        let set = self.perturbation_set(model, instance, self.instance_seed(index))?;
        let fit = fit_surrogate(
            &set.z,
            &set.target,
            &set.weights,
            T::lit(self.config.ridge_alpha),
            self.config.k_features,
        )?;
        Ok(Explanation {
            instance: index,
            class: set.class,
            intercept: fit.intercept,
            weights: fit.sparse,
            score: fit.score,
            probability: set.probability,
        })
    }
}

/// Explains row `index` of `data` with a discretizer fitted on all of `data`.
pub fn explain_instance<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    index: usize,
    config: &LimeConfig,
    seed: Seed,
) -> Result<Explanation<T>> {
    if index >= data.n_rows() {
        return Err(Error::invalid(format!("instance {index} outside 0..{}", data.n_rows())));
    }
    let explainer = LimeExplainer::new(&data.x, &data.kinds(), config.clone(), seed)?;
    explainer.explain(model, data.x.row(index), index)
}
