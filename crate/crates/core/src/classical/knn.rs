use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Brute-force k-nearest-neighbour classifier under Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    features: Tensor<T>,
    labels: Vec<usize>,
    k: usize,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub class: usize,
    /// Neighbour count per class.
    pub votes: Vec<usize>,
}

impl KnnPrediction {
    pub fn probabilities(&self) -> Vec<f64> {
        let k: usize = self.votes.iter().sum();
        self.votes.iter().map(|&v| v as f64 / k as f64).collect()
    }
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit(features: Tensor<T>, labels: Vec<usize>, k: usize, classes: usize) -> Result<Self> {
        if features.rank() != 2 || features.dim(0) != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for features {:?}",
                labels.len(),
                features.shape()
            )));
        }
        if k == 0 || k > labels.len() {
            return Err(Error::Config(format!(
                "k = {k} must be in 1..={}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            k,
            classes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.features.dim(1)
    }

    fn distance(&self, row: usize, query: &[T]) -> f64 {
        self.features
            .row(row)
            .iter()
            .zip(query)
            .map(|(&a, &b)| {
                let d = (a - b).to_f64().unwrap_or(f64::NAN);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Majority vote of the `k` nearest stored rows.
    ///
    /// Neighbours are ranked by `(distance, label)`, so which of several
    /// equidistant rows make the cut never depends on storage order. Vote
    /// ties go to the class with the smaller summed neighbour distance, then
    /// to the lower class index.
    pub fn predict(&self, query: &[T]) -> Result<KnnPrediction> {
        if query.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} features, model expects {}",
                query.len(),
                self.dim()
            )));
        }
        let mut ranked: Vec<(f64, usize)> = (0..self.labels.len())
            .map(|i| (self.distance(i, query), self.labels[i]))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < ranked.len() {
            ranked.select_nth_unstable_by(self.k - 1, cmp);
        }
        let mut votes = vec![0usize; self.classes];
        let mut summed = vec![0.0f64; self.classes];
        let mut nearest = ranked[..self.k].to_vec();
        nearest.sort_by(cmp);
        for &(d, label) in &nearest {
            votes[label] += 1;
            summed[label] += d;
        }
        let class = (0..self.classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(summed[a].total_cmp(&summed[b]))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1 guarantees a vote");
        Ok(KnnPrediction { class, votes })
    }

    /// Predictions for every row of `queries`, computed in parallel.
    pub fn predict_batch(&self, queries: &Tensor<T>) -> Result<Vec<KnnPrediction>> {
        if queries.rank() != 2 {
            return Err(Error::Shape(format!("queries must be N×D, got {:?}", queries.shape())));
        }
        (0..queries.dim(0))
            .into_par_iter()
            .map(|i| self.predict(queries.row(i)))
            .collect()
    }
}
