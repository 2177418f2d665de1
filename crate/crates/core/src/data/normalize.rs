use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dataset::{MaskMatrix, StDataset};
use crate::error::{Error, Result};

/// Per-sensor z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean and population std per sensor over entries in `train_range`
    /// that `visible` marks. A sensor with nothing visible gets `(0, 1)`; one
    /// with zero spread keeps its mean and gets `std = 1`.
    pub fn fit(dataset: &StDataset, train_range: Range<usize>, visible: &MaskMatrix) -> Result<Self> {
        if train_range.is_empty() || train_range.end > dataset.n_steps() {
            return Err(Error::Argument(format!(
                "training range {train_range:?} is empty or exceeds {} steps",
                dataset.n_steps()
            )));
        }
        let nodes = dataset.n_nodes();
        let mut mean = vec![0.0; nodes];
        let mut std = vec![1.0; nodes];
        for n in 0..nodes {
            let vals: Vec<f64> = train_range
                .clone()
                .filter(|&t| visible.get(t, n) && dataset.is_observed(t, n))
                .map(|t| dataset.value(t, n))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / vals.len() as f64;
            let sd = var.sqrt();
            mean[n] = mu;
            if sd > f64::EPSILON * mu.abs().max(1.0) {
                std[n] = sd;
            }
        }
        Ok(Normalizer { mean, std })
    }

    pub fn identity(nodes: usize) -> Self {
        Normalizer {
            mean: vec![0.0; nodes],
            std: vec![1.0; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, node: usize, value: f64) -> f64 {
        (value - self.mean[node]) / self.std[node]
    }

    pub fn denormalize(&self, node: usize, value: f64) -> f64 {
        value * self.std[node] + self.mean[node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sensor_normalizes_to_zero() {
        let ds = StDataset::from_matrix(vec![3.0, 1.0, 3.0, 2.0, 3.0, 6.0], 3, 2, 5, None).unwrap();
        let norm = Normalizer::fit(&ds, 0..3, ds.native_mask()).unwrap();
        assert_eq!(norm.std[0], 1.0);
        assert_eq!(norm.normalize(0, 3.0), 0.0);
        assert_eq!(norm.mean[1], 3.0);
    }

    #[test]
    fn unseen_sensor_falls_back_to_identity() {
        let ds = StDataset::from_matrix(vec![f64::NAN, 1.0, f64::NAN, 2.0], 2, 2, 5, None).unwrap();
        let norm = Normalizer::fit(&ds, 0..2, ds.native_mask()).unwrap();
        assert_eq!((norm.mean[0], norm.std[0]), (0.0, 1.0));
        assert!(Normalizer::fit(&ds, 0..0, ds.native_mask()).is_err());
    }

    #[test]
    fn only_visible_training_entries_count() {
        let ds = StDataset::from_matrix(vec![1.0, 3.0, 1000.0, 5000.0], 4, 1, 5, None).unwrap();
        let mut visible = ds.native_mask().clone();
        visible.set(1, 0, false);
        let norm = Normalizer::fit(&ds, 0..3, &visible).unwrap();
        assert_eq!(norm.mean[0], 500.5);
    }
}
