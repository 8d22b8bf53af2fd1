//! The cardinality-estimator contract.

use alloc::vec::Vec;

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::oracle;

/// Predicts how many points of a fixed set lie within `eps` of a query.
///
/// Implementations must be pure after construction: the same `(point, eps)`
/// always yields the same value, and predictions are never negative.
pub trait CardinalityEstimator {
    /// Dimension of the points it accepts.
    fn dim(&self) -> usize;

    fn predict(&self, point: &[f64], eps: f64) -> Result<f64>;

    /// Predictions for the listed rows of `points` at one `eps`.
    fn predict_rows(&self, points: &Dataset, rows: &[usize], eps: f64) -> Result<Vec<f64>> {
        rows.iter().map(|&i| self.predict(points.get(i), eps)).collect()
    }

    /// Predictions for every row of `points` at one `eps`.
    fn predict_batch(&self, points: &Dataset, eps: f64) -> Result<Vec<f64>> {
        points.iter().map(|p| self.predict(p, eps)).collect()
    }
}

impl<E: CardinalityEstimator + ?Sized> CardinalityEstimator for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, point: &[f64], eps: f64) -> Result<f64> {
        (**self).predict(point, eps)
    }
    fn predict_rows(&self, points: &Dataset, rows: &[usize], eps: f64) -> Result<Vec<f64>> {
        (**self).predict_rows(points, rows, eps)
    }
    fn predict_batch(&self, points: &Dataset, eps: f64) -> Result<Vec<f64>> {
        (**self).predict_batch(points, eps)
    }
}

/// Exact counts by brute force over `R`.
///
/// Test double: its cost grows with `|R|`, so it only serves to check filter and
/// join logic independently of learning quality.
#[derive(Clone, Copy, Debug)]
pub struct OracleEstimator<'a> {
    r: &'a Dataset,
    metric: Metric,
}

impl<'a> OracleEstimator<'a> {
    pub fn new(r: &'a Dataset, metric: Metric) -> Self {
        Self { r, metric }
    }
}

impl CardinalityEstimator for OracleEstimator<'_> {
    fn dim(&self) -> usize {
        self.r.dim()
    }

    fn predict(&self, point: &[f64], eps: f64) -> Result<f64> {
        oracle::range_count(self.r, point, eps, self.metric).map(|c| c as f64)
    }
}

/// Predicts the same value everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantEstimator {
    pub dim: usize,
    pub value: f64,
}

impl CardinalityEstimator for ConstantEstimator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, point: &[f64], _eps: f64) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        Ok(self.value.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_gaussian_mixture;

    #[test]
    fn oracle_matches_range_count() {
        let r = synth_gaussian_mixture(100, 6, 2, 0.3, 1).unwrap();
        let q = synth_gaussian_mixture(20, 6, 2, 0.3, 2).unwrap();
        let est = OracleEstimator::new(&r, Metric::Cosine);
        let batch = est.predict_batch(&q, 0.5).unwrap();
        for (i, query) in q.iter().enumerate() {
            let want = oracle::range_count(&r, query, 0.5, Metric::Cosine).unwrap() as f64;
            assert_eq!(est.predict(query, 0.5).unwrap(), want);
            assert_eq!(batch[i], want);
        }
    }
}
