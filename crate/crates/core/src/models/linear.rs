use serde::{Deserialize, Serialize};

use super::{Classifier, Hyper};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{softmax_in_place, Scalar};

/// Multinomial softmax regression trained by full-batch gradient descent on
/// the L2-regularised mean cross-entropy. The bias is not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogisticRegression<T> {
    /// `n_classes × n_features`.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LogisticRegression<T> {
    pub fn from_parameters(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if weights.rows() != bias.len() || bias.len() < 2 {
            return Err(Error::invalid(format!(
                "{} weight rows for {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(LogisticRegression { weights, bias })
    }

    /// Returns the model and the objective at every visited iterate.
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Result<(Self, Vec<T>)> {
        let step = T::lit(hp.real("learning_rate"));
        let l2 = T::lit(hp.real("l2"));
        let max_iter = hp.count("max_iter");
        let tol = T::lit(hp.real("tol"));
        let (n, d) = (x.rows(), x.cols());
        let nf = T::from_count(n);

        let mut model = LogisticRegression {
            weights: Matrix::zeros(n_classes, d),
            bias: vec![T::zero(); n_classes],
        };
        let mut trace = Vec::with_capacity(max_iter + 1);
        let mut grad_w = Matrix::zeros(n_classes, d);
        let mut grad_b = vec![T::zero(); n_classes];
        let mut p = vec![T::zero(); n_classes];
        for iter in 0..=max_iter {
            grad_w.as_mut_slice().fill(T::zero());
            grad_b.fill(T::zero());
            let mut nll = T::zero();
            for (row, &label) in x.row_iter().zip(y) {
                model.row_proba(row, &mut p);
                nll -= p[label].max(T::min_positive_value()).ln();
                for c in 0..n_classes {
                    let g = p[c] - if c == label { T::one() } else { T::zero() };
                    grad_b[c] += g;
                    for (gw, &v) in grad_w.row_mut(c).iter_mut().zip(row) {
                        *gw += g * v;
                    }
                }
            }
            let penalty: T = model.weights.as_slice().iter().map(|&w| w * w).sum();
            trace.push(nll / nf + l2 * penalty / T::lit(2.0));

            let mut norm_sq = T::zero();
            for (g, &w) in grad_w.as_mut_slice().iter_mut().zip(model.weights.as_slice()) {
                *g = *g / nf + l2 * w;
                norm_sq += *g * *g;
            }
            for g in grad_b.iter_mut() {
                *g /= nf;
                norm_sq += *g * *g;
            }
            if iter == max_iter || norm_sq.sqrt() < tol {
                break;
            }
            for (w, &g) in model.weights.as_mut_slice().iter_mut().zip(grad_w.as_slice()) {
                *w -= step * g;
            }
            for (b, &g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= step * g;
            }
        }
        Ok((model, trace))
    }
}

impl<T: Scalar> Classifier<T> for LogisticRegression<T> {
    fn n_features(&self) -> usize {
        self.weights.cols()
    }

    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.bias[c]
                + self
                    .weights
                    .row(c)
                    .iter()
                    .zip(row)
                    .map(|(&w, &v)| w * v)
                    .sum::<T>();
        }
        softmax_in_place(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Algorithm, ModelSpec};

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let m = LogisticRegression::from_parameters(Matrix::<f64>::zeros(3, 2), vec![0.0; 3]).unwrap();
        let p = m.predict_proba(&Matrix::from_rows(&[vec![4.0, -2.0]]).unwrap()).unwrap();
        for &v in p.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]]).unwrap();
        let hp = ModelSpec::default_for(Algorithm::LR, 0).resolve().unwrap();
        let (m, trace) = LogisticRegression::fit(&x, &[0, 0, 1, 1], 2, &hp).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(m.predict(&x).unwrap(), vec![0, 0, 1, 1]);
        assert!((trace[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
