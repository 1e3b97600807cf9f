use serde::{Deserialize, Serialize};

use super::{class_members, Classifier, Hyper};
use crate::matrix::Matrix;
use crate::scalar::{softmax_in_place, Scalar};

fn log_priors<T: Scalar>(members: &[Vec<usize>], n: usize) -> Vec<T> {
    members
        .iter()
        .map(|m| (T::from_count(m.len()) / T::from_count(n)).ln())
        .collect()
}

/// Gaussian naive Bayes. Every per-class variance is inflated by
/// `var_smoothing` times the largest feature variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GaussianNb<T> {
    pub log_prior: Vec<T>,
    pub means: Matrix<T>,
    pub variances: Matrix<T>,
}

impl<T: Scalar> GaussianNb<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Self {
        let d = x.cols();
        let members = class_members(y, n_classes);
        let mut means = Matrix::zeros(n_classes, d);
        let mut variances = Matrix::zeros(n_classes, d);
        for (c, rows) in members.iter().enumerate() {
            let nc = T::from_count(rows.len());
            for &i in rows {
                for (m, &v) in means.row_mut(c).iter_mut().zip(x.row(i)) {
                    *m += v;
                }
            }
            means.row_mut(c).iter_mut().for_each(|m| *m /= nc);
            for &i in rows {
                for j in 0..d {
                    let dv = x[(i, j)] - means[(c, j)];
                    variances[(c, j)] += dv * dv;
                }
            }
            variances.row_mut(c).iter_mut().for_each(|v| *v /= nc);
        }
        let overall = crate::preprocess::fit_scaler(x).expect("non-empty training set");
        let max_var = overall.std.iter().fold(T::zero(), |m, &s| m.max(s * s));
        let smoothing = T::lit(hp.real("var_smoothing"));
        let eps = if max_var > T::zero() {
            smoothing * max_var
        } else {
            smoothing
        }
        .max(T::min_positive_value());
        variances.as_mut_slice().iter_mut().for_each(|v| *v += eps);
        GaussianNb {
            log_prior: log_priors(&members, x.rows()),
            means,
            variances,
        }
    }
}

impl<T: Scalar> Classifier<T> for GaussianNb<T> {
    fn n_features(&self) -> usize {
        self.means.cols()
    }

    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        let two_pi = T::lit(std::f64::consts::TAU);
        let half = T::lit(0.5);
        for (c, o) in out.iter_mut().enumerate() {
            let mut ll = self.log_prior[c];
            for ((&v, &m), &var) in row.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
                ll -= half * ((two_pi * var).ln() + (v - m) * (v - m) / var);
            }
            *o = ll;
        }
        softmax_in_place(out);
    }
}

/// Multinomial naive Bayes with Laplace smoothing. Features are first shifted
/// by their training minimum so standardised (negative) inputs become valid
/// counts; values below that minimum at prediction time clamp to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MultinomialNb<T> {
    pub shift: Vec<T>,
    pub log_prior: Vec<T>,
    pub log_theta: Matrix<T>,
}

impl<T: Scalar> MultinomialNb<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Self {
        let d = x.cols();
        let alpha = T::lit(hp.real("alpha"));
        let shift: Vec<T> = (0..d)
            .map(|j| x.row_iter().fold(T::infinity(), |m, r| m.min(r[j])))
            .collect();
        let members = class_members(y, n_classes);
        let mut log_theta = Matrix::zeros(n_classes, d);
        for (c, rows) in members.iter().enumerate() {
            let counts = log_theta.row_mut(c);
            for &i in rows {
                for ((n, &v), &s) in counts.iter_mut().zip(x.row(i)).zip(&shift) {
                    *n += v - s;
                }
            }
            let total: T = counts.iter().copied().sum::<T>() + alpha * T::from_count(d);
            for n in counts.iter_mut() {
                *n = ((*n + alpha) / total).ln();
            }
        }
        MultinomialNb {
            shift,
            log_prior: log_priors(&members, x.rows()),
            log_theta,
        }
    }
}

impl<T: Scalar> Classifier<T> for MultinomialNb<T> {
    fn n_features(&self) -> usize {
        self.shift.len()
    }

    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.log_prior[c]
                + row
                    .iter()
                    .zip(&self.shift)
                    .zip(self.log_theta.row(c))
                    .map(|((&v, &s), &lt)| (v - s).max(T::zero()) * lt)
                    .sum::<T>();
        }
        softmax_in_place(out);
    }
}
