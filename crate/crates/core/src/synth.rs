//! Seeded synthetic driving-behaviour data: a few class-informative
//! Gaussian features among standard-normal noise, with imbalanced classes.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub informative: usize,
    /// Gap between neighbouring class means, in units of `noise_std`.
    pub separation: f64,
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_rows: 2000,
            n_classes: 3,
            n_features: 18,
            informative: 5,
            separation: 3.0,
            noise_std: 1.0,
        }
    }
}

/// Generated data plus the columns that carry class signal.
#[derive(Debug, Clone)]
pub struct Synthetic<T> {
    pub data: Dataset<T>,
    pub informative: Vec<usize>,
}

impl SynthSpec {
    /// Integer prior weights: 5:3:2 for three classes, 3:2 for two,
    /// `C - c` otherwise.
    fn prior_weights(&self) -> Vec<usize> {
        match self.n_classes {
            2 => vec![3, 2],
            3 => vec![5, 3, 2],
            c => (0..c).map(|i| c - i).collect(),
        }
    }

    /// Rows per class by largest remainder on the priors.
    pub fn class_sizes(&self) -> Vec<usize> {
        let w = self.prior_weights();
        let total: usize = w.iter().sum();
        let mut sizes: Vec<usize> = w.iter().map(|&p| self.n_rows * p / total).collect();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| {
            (self.n_rows * w[b] % total)
                .cmp(&(self.n_rows * w[a] % total))
                .then(a.cmp(&b))
        });
        let short = self.n_rows - sizes.iter().sum::<usize>();
        for &c in order.iter().take(short) {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.n_classes == 3 {
            return ["aggressive", "normal", "vague"].map(String::from).to_vec();
        }
        let width = (self.n_classes - 1).to_string().len();
        (0..self.n_classes).map(|c| format!("class{c:0width$}")).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_classes < 2 {
            v.push(format!("synth.n_classes = {} must be at least 2", self.n_classes));
        }
        if self.n_features == 0 {
            v.push("synth.n_features must be at least 1".into());
        }
        if self.informative > self.n_features {
            v.push(format!(
                "synth.informative = {} exceeds synth.n_features = {}",
                self.informative, self.n_features
            ));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            v.push(format!("synth.separation = {} must be finite and >= 0", self.separation));
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            v.push(format!("synth.noise_std = {} must be finite and > 0", self.noise_std));
        }
        if self.n_classes >= 2 && self.class_sizes().iter().any(|&s| s < 2) {
            v.push(format!(
                "synth.n_rows = {} leaves a class with fewer than 2 rows",
                self.n_rows
            ));
        }
        v
    }

    pub fn generate<T: Scalar>(&self, seed: Seed) -> Result<Synthetic<T>> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        let mut rng = seed.rng();
        let mut labels: Vec<usize> = self
            .class_sizes()
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect();
        labels.shuffle(&mut rng);

        let mut informative: Vec<usize> = (0..self.n_features).collect();
        informative.shuffle(&mut rng);
        informative.truncate(self.informative);
        informative.sort_unstable();
        // rank of each informative column among the informative ones
        let mut role = vec![None; self.n_features];
        for (j, &col) in informative.iter().enumerate() {
            role[col] = Some(j);
        }

        let noise = Normal::new(0.0, self.noise_std).expect("validated std");
        let c = self.n_classes;
        let mut x = Matrix::zeros(self.n_rows, self.n_features);
        for (i, &label) in labels.iter().enumerate() {
            for (col, r) in role.iter().enumerate() {
                let v: f64 = match r {
                    Some(j) => {
                        let level = ((label + j) % c) as f64;
                        self.separation * self.noise_std * level + noise.sample(&mut rng)
                    }
                    None => StandardNormal.sample(&mut rng),
                };
                x[(i, col)] = T::lit(v);
            }
        }
        let width = self.n_features.to_string().len().max(2);
        let schema = (0..self.n_features)
            .map(|j| ColumnSchema {
                name: format!("feature_{:0width$}", j + 1),
                kind: ColumnKind::Numeric,
                index: j,
            })
            .collect();
        Ok(Synthetic {
            data: Dataset::new(x, labels, schema, self.class_names())?,
            informative,
        })
    }
}
