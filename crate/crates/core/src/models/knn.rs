use serde::{Deserialize, Serialize};

use super::{Classifier, Hyper};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// k-nearest neighbours under Euclidean distance. Equidistant neighbours
/// are ordered by training row index; probabilities are vote fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Knn<T> {
    pub k: usize,
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    n_classes: usize,
}

impl<T: Scalar> Knn<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, hp: &Hyper) -> Result<Self> {
        let k = hp.count("k");
        if k == 0 {
            return Err(Error::Degenerate {
                algorithm: "KNN",
                reason: "k must be at least 1".into(),
            });
        }
        Ok(Knn {
            k: k.min(x.rows()),
            x: x.clone(),
            y: y.to_vec(),
            n_classes,
        })
    }

    /// Training indices of the `k` nearest rows, nearest first.
    pub fn neighbours(&self, row: &[T]) -> Vec<usize> {
        // sorted by (distance, index); rows arrive in index order, so an
        // equidistant newcomer never displaces an earlier row
        let mut best: Vec<(T, usize)> = Vec::with_capacity(self.k + 1);
        'rows: for (i, r) in self.x.row_iter().enumerate() {
            let full = best.len() == self.k;
            let worst = best.last().map_or(T::infinity(), |b| b.0);
            let mut s = T::zero();
            for (&a, &b) in r.iter().zip(row) {
                s += (a - b) * (a - b);
                if full && s > worst {
                    continue 'rows;
                }
            }
            if full && !(s < worst) {
                continue;
            }
            let at = best.partition_point(|b| b.0 <= s);
            best.insert(at, (s, i));
            best.truncate(self.k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }
}

impl<T: Scalar> Classifier<T> for Knn<T> {
    fn n_features(&self) -> usize {
        self.x.cols()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn row_proba(&self, row: &[T], out: &mut [T]) {
        out.fill(T::zero());
        let nb = self.neighbours(row);
        for &i in &nb {
            out[self.y[i]] += T::one();
        }
        let k = T::from_count(nb.len());
        out.iter_mut().for_each(|v| *v /= k);
    }
}
