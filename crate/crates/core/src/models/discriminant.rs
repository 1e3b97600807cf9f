use serde::{Deserialize, Serialize};

use super::{class_members, Classifier, Hyper};
use crate::error::{Error, Result};
use crate::matrix::{Cholesky, Matrix};
use crate::scalar::{softmax_in_place, Scalar};

fn class_means<T: Scalar>(x: &Matrix<T>, members: &[Vec<usize>]) -> Matrix<T> {
    let mut means = Matrix::zeros(members.len(), x.cols());
    for (c, rows) in members.iter().enumerate() {
        for &i in rows {
            for (m, &v) in means.row_mut(c).iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        let nc = T::from_count(rows.len());
        means.row_mut(c).iter_mut().for_each(|m| *m /= nc);
    }
    means
}

/// Scatter of `rows` around `mean`, unnormalised.
fn scatter<T: Scalar>(x: &Matrix<T>, rows: &[usize], mean: &[T], acc: &mut Matrix<T>) {
    let d = x.cols();
    let mut dv = vec![T::zero(); d];
    for &i in rows {
        for j in 0..d {
            dv[j] = x[(i, j)] - mean[j];
        }
        for a in 0..d {
            for b in 0..=a {
                acc[(a, b)] += dv[a] * dv[b];
            }
        }
    }
}

fn symmetrise_and_ridge<T: Scalar>(m: &mut Matrix<T>, scale: T, ridge: T) {
    let d = m.rows();
    for a in 0..d {
        for b in 0..=a {
            let v = m[(a, b)] / scale;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
        m[(a, a)] += ridge;
    }
}

fn factor<T: Scalar>(algorithm: &'static str, m: &Matrix<T>) -> Result<Cholesky<T>> {
    Cholesky::new(m).map_err(|e| Error::Degenerate {
        algorithm,
        reason: format!("covariance is not positive definite ({e}); increase ridge"),
    })
}

/// Linear discriminant analysis with a pooled (population) covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Lda<T> {
    /// Row `c` is `Σ⁻¹ μ_c`.
    pub coef: Matrix<T>,
    pub intercept: Vec<T>,
}

impl<T: Scalar> Lda<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Result<Self> {
        let d = x.cols();
        let members = class_members(y, n_classes);
        let means = class_means(x, &members);
        let mut cov = Matrix::zeros(d, d);
        for (c, rows) in members.iter().enumerate() {
            scatter(x, rows, means.row(c), &mut cov);
        }
        symmetrise_and_ridge(&mut cov, T::from_count(x.rows()), T::lit(hp.real("ridge")));
        let chol = factor("LDA", &cov)?;
        let mut coef = Matrix::zeros(n_classes, d);
        let mut intercept = Vec::with_capacity(n_classes);
        for (c, rows) in members.iter().enumerate() {
            let w = chol.solve(means.row(c));
            let quad: T = w.iter().zip(means.row(c)).map(|(&a, &b)| a * b).sum();
            let prior = T::from_count(rows.len()) / T::from_count(x.rows());
            intercept.push(prior.ln() - quad / T::lit(2.0));
            coef.row_mut(c).copy_from_slice(&w);
        }
        Ok(Lda { coef, intercept })
    }
}

impl<T: Scalar> Classifier<T> for Lda<T> {
    fn n_features(&self) -> usize {
        self.coef.cols()
    }

    fn n_classes(&self) -> usize {
        self.intercept.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.intercept[c] + self.coef.row(c).iter().zip(row).map(|(&w, &v)| w * v).sum::<T>();
        }
        softmax_in_place(out);
    }
}

/// Quadratic discriminant analysis; per-class covariance with the `n_c - 1`
/// denominator plus a diagonal ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Qda<T> {
    pub means: Matrix<T>,
    pub factors: Vec<Cholesky<T>>,
    /// `ln π_c - ½ ln|Σ_c|`.
    pub offsets: Vec<T>,
}

impl<T: Scalar> Qda<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Result<Self> {
        let d = x.cols();
        let members = class_members(y, n_classes);
        if let Some(c) = members.iter().position(|m| m.len() < 2) {
            return Err(Error::Degenerate {
                algorithm: "QDA",
                reason: format!("class {c} has fewer than 2 rows"),
            });
        }
        let means = class_means(x, &members);
        let ridge = T::lit(hp.real("ridge"));
        let mut factors = Vec::with_capacity(n_classes);
        let mut offsets = Vec::with_capacity(n_classes);
        for (c, rows) in members.iter().enumerate() {
            let mut cov = Matrix::zeros(d, d);
            scatter(x, rows, means.row(c), &mut cov);
            symmetrise_and_ridge(&mut cov, T::from_count(rows.len() - 1), ridge);
            let chol = factor("QDA", &cov)?;
            let prior = T::from_count(rows.len()) / T::from_count(x.rows());
            offsets.push(prior.ln() - chol.log_det() / T::lit(2.0));
            factors.push(chol);
        }
        Ok(Qda {
            means,
            factors,
            offsets,
        })
    }
}

impl<T: Scalar> Classifier<T> for Qda<T> {
    fn n_features(&self) -> usize {
        self.means.cols()
    }

    fn n_classes(&self) -> usize {
        self.offsets.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        let mut dv = vec![T::zero(); row.len()];
        for (c, o) in out.iter_mut().enumerate() {
            for ((d, &v), &m) in dv.iter_mut().zip(row).zip(self.means.row(c)) {
                *d = v - m;
            }
            *o = self.offsets[c] - self.factors[c].mahalanobis_sq(&dv) / T::lit(2.0);
        }
        softmax_in_place(out);
    }
}
