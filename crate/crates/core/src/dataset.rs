//! Vectors, distance metrics, normalization and train/test splitting.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Purpose};

/// Unit vectors are accepted as normalized when their norm is this close to 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `1 - cos(a, b)`, in `[0, 2]`.
    Cosine,
    /// L2 norm of the difference.
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::invalid(alloc::format!("unknown metric '{other}'"))),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        let d2 = x[2] - y[2];
        let d3 = x[3] - y[3];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Cosine distance from a precomputed dot product and norms.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    let denom = norm_a * norm_b;
    if denom == 0.0 {
        // Zero vectors have no direction: identical zeros are coincident,
        // anything else is treated as orthogonal.
        return if norm_a == norm_b { 0.0 } else { 1.0 };
    }
    let d = 1.0 - dot / denom;
    // Rounding noise on parallel vectors would otherwise keep a point out of
    // its own zero-radius neighborhood.
    if d < 8.0 * f64::EPSILON {
        0.0
    } else {
        d.min(2.0)
    }
}

#[inline]
pub(crate) fn distance_unchecked(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => math::sqrt(squared_l2(a, b)),
        Metric::Cosine => cosine_from_parts(dot(a, b), l2_norm(a), l2_norm(b)),
    }
}

/// Distance between two vectors of equal dimension.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(distance_unchecked(a, b, metric))
}

/// Euclidean radius equivalent to cosine distance `eps_cos` on unit vectors.
///
/// On the unit sphere `|a - b|^2 = 2 - 2 cos(a, b)`, hence `sqrt(2 eps_cos)`.
pub fn convert_epsilon(eps_cos: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&eps_cos) {
        return Err(Error::invalid(alloc::format!(
            "cosine epsilon {eps_cos} outside [0, 2]"
        )));
    }
    Ok(math::sqrt(2.0 * eps_cos))
}

/// An ordered collection of fixed-dimension real vectors with a metric tag.
///
/// Stored row-major in one flat buffer; per-row L2 norms are cached for the
/// cosine metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    metric: Metric,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a row-major buffer of `data.len() / dim` vectors.
    pub fn from_flat(
        name: impl Into<String>,
        metric: Metric,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.is_empty() {
            return Err(Error::Empty);
        }
        if data.len() % dim != 0 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: pos / dim });
        }
        let norms = data.chunks_exact(dim).map(l2_norm).collect();
        Ok(Self {
            name: name.into(),
            metric,
            dim,
            data,
            norms,
        })
    }

    /// Builds a dataset from rows; the first row fixes the dimension.
    pub fn from_rows<I, R>(name: impl Into<String>, metric: Metric, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut dim = None;
        let mut data = Vec::new();
        for (index, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            let expected = *dim.get_or_insert(row.len());
            if row.len() != expected {
                return Err(Error::RecordWidth {
                    record: index,
                    expected,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(name, metric, dim.ok_or(Error::Empty)?, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn norm(&self, index: usize) -> f64 {
        self.norms[index]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    /// New dataset holding the listed rows, in the listed order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.get(i));
        }
        let norms = indices.iter().map(|&i| self.norms[i]).collect();
        if indices.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self {
            name: name.into(),
            metric: self.metric,
            dim: self.dim,
            data,
            norms,
        })
    }

    /// Concatenates `other` after `self`; dimensions must agree.
    pub fn concat(&self, other: &Dataset, name: impl Into<String>) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = self.clone().with_name(name);
        out.data.extend_from_slice(&other.data);
        out.norms.extend_from_slice(&other.norms);
        Ok(out)
    }

    /// Distance from row `index` to `query`, whose norm is `query_norm`.
    #[inline]
    pub(crate) fn distance_to(
        &self,
        index: usize,
        query: &[f64],
        query_norm: f64,
        metric: Metric,
    ) -> f64 {
        let row = self.get(index);
        match metric {
            Metric::Euclidean => math::sqrt(squared_l2(row, query)),
            Metric::Cosine => cosine_from_parts(dot(row, query), self.norms[index], query_norm),
        }
    }

    pub(crate) fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(())
    }

    /// First row whose norm deviates from 1 by more than [`UNIT_NORM_TOLERANCE`].
    pub fn first_non_unit(&self) -> Option<(usize, f64)> {
        self.norms
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, n)| (n - 1.0).abs() > UNIT_NORM_TOLERANCE)
    }

    /// Fails unless every row is unit-normalized.
    pub fn require_unit_norm(&self) -> Result<()> {
        match self.first_non_unit() {
            Some((index, norm)) => Err(Error::NotNormalized { index, norm }),
            None => Ok(()),
        }
    }
}

/// Scales every vector to unit L2 norm, preserving order.
pub fn normalize_unit(ds: &Dataset) -> Result<Dataset> {
    if let Some(index) = ds.norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm { index });
    }
    let mut data = Vec::with_capacity(ds.data.len());
    for (row, &norm) in ds.iter().zip(&ds.norms) {
        data.extend(row.iter().map(|x| x / norm));
    }
    Dataset::from_flat(ds.name.clone(), ds.metric, ds.dim, data)
}

/// Fraction and seed of a reproducible train/test split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(alloc::format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        Ok(Self {
            train_fraction,
            seed,
        })
    }

    /// Number of training rows for a dataset of `n` rows, kept in `[1, n-1]`.
    pub fn train_len(&self, n: usize) -> usize {
        let raw = math::floor(self.train_fraction * n as f64) as usize;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Row indices of the train and test sides, each ascending.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("split requires at least 2 vectors"));
    }
    let SplitSpec {
        train_fraction,
        seed,
    } = SplitSpec::new(spec.train_fraction, spec.seed)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, Purpose::Split));
    let cut = SplitSpec {
        train_fraction,
        seed,
    }
    .train_len(n);
    let mut train = order[..cut].to_vec();
    let mut test = order[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits `ds` into `(R, S)`: the training side acts as `R`, the test side as `S`.
pub fn split_train_test(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), spec)?;
    let r = ds.subset(&train, alloc::format!("{}-train", ds.name))?;
    let s = ds.subset(&test, alloc::format!("{}-test", ds.name))?;
    Ok((r, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn ds(rows: &[&[f64]]) -> Dataset {
        Dataset::from_rows("t", Metric::Euclidean, rows.iter().copied()).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let out = normalize_unit(&ds(&[&[3.0, 4.0]])).unwrap();
        assert!((out.get(0)[0] - 0.6).abs() < 1e-12);
        assert!((out.get(0)[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_unit_input_is_unchanged() {
        let v = [0.6, 0.8, 0.0];
        let out = normalize_unit(&ds(&[&v])).unwrap();
        for (a, b) in out.get(0).iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        let err = normalize_unit(&ds(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert_eq!(err, Error::ZeroNorm { index: 1 });
    }

    #[test]
    fn distance_identity_and_orthogonality() {
        let a = [0.3, -0.2, 0.9];
        for m in [Metric::Cosine, Metric::Euclidean] {
            assert_eq!(distance(&a, &a, m).unwrap(), 0.0);
        }
        let x = [1.0, 0.0];
        let y = [0.0, 1.0];
        assert!((distance(&x, &y, Metric::Cosine).unwrap() - 1.0).abs() < 1e-12);
        assert!((distance(&x, &y, Metric::Euclidean).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_scalar_recomputation() {
        let mut rng = crate::rng::seeded(11, Purpose::Evaluation);
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sq = 0.0;
        let mut ab = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for i in 0..8 {
            sq += (a[i] - b[i]) * (a[i] - b[i]);
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        let e = distance(&a, &b, Metric::Euclidean).unwrap();
        let c = distance(&a, &b, Metric::Cosine).unwrap();
        assert!((e - sq.sqrt()).abs() < 1e-12);
        assert!((c - (1.0 - ab / (aa.sqrt() * bb.sqrt()))).abs() < 1e-12);
    }

    #[test]
    fn distance_dimension_mismatch() {
        assert_eq!(
            distance(&[1.0], &[1.0, 2.0], Metric::Euclidean),
            Err(Error::DimensionMismatch {
                expected: 1,
                found: 2
            })
        );
    }

    #[test]
    fn convert_epsilon_values() {
        assert_eq!(convert_epsilon(0.0).unwrap(), 0.0);
        assert!((convert_epsilon(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((convert_epsilon(2.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(convert_epsilon(2.5).is_err());
        assert!(convert_epsilon(-0.1).is_err());
    }

    #[test]
    fn rows_of_different_width_rejected() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]];
        assert_eq!(
            Dataset::from_rows("x", Metric::Euclidean, rows).unwrap_err(),
            Error::RecordWidth {
                record: 1,
                expected: 3,
                found: 4
            }
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows("x", Metric::Euclidean, rows).unwrap();
        let spec = SplitSpec::new(0.8, 3).unwrap();
        let (r, s) = split_train_test(&d, &spec).unwrap();
        assert_eq!((r.len(), s.len()), (8, 2));
        let (r2, s2) = split_train_test(&d, &spec).unwrap();
        assert_eq!(r, r2);
        assert_eq!(s, s2);
    }

    #[test]
    fn different_seeds_give_different_splits() {
        let (a, _) = split_indices(1000, &SplitSpec::new(0.8, 1).unwrap()).unwrap();
        let (b, _) = split_indices(1000, &SplitSpec::new(0.8, 2).unwrap()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn split_rejects_tiny_and_bad_fraction() {
        assert!(split_indices(1, &SplitSpec { train_fraction: 0.5, seed: 0 }).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let (train, test) = split_indices(n, &SplitSpec::new(frac, seed).unwrap()).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(!train.is_empty() && !test.is_empty());
        }

        #[test]
        fn distance_is_symmetric(a in proptest::collection::vec(-2.0f64..2.0, 7),
                                 b in proptest::collection::vec(-2.0f64..2.0, 7)) {
            for m in [Metric::Cosine, Metric::Euclidean] {
                let ab = distance(&a, &b, m).unwrap();
                let ba = distance(&b, &a, m).unwrap();
                prop_assert!((ab - ba).abs() < 1e-9);
                prop_assert!(ab >= 0.0);
            }
        }

        #[test]
        fn unit_vectors_link_the_metrics(a in proptest::collection::vec(-1.0f64..1.0, 6),
                                         b in proptest::collection::vec(-1.0f64..1.0, 6)) {
            prop_assume!(l2_norm(&a) > 1e-3 && l2_norm(&b) > 1e-3);
            let d = normalize_unit(&Dataset::from_rows("p", Metric::Cosine, [a, b]).unwrap()).unwrap();
            let e = distance(d.get(0), d.get(1), Metric::Euclidean).unwrap();
            let c = distance(d.get(0), d.get(1), Metric::Cosine).unwrap();
            prop_assert!((e * e - 2.0 * c).abs() < 1e-6);
        }

        #[test]
        fn normalize_is_idempotent(rows in proptest::collection::vec(proptest::collection::vec(0.1f64..3.0, 5), 1..10)) {
            let d = Dataset::from_rows("p", Metric::Cosine, rows).unwrap();
            let once = normalize_unit(&d).unwrap();
            let twice = normalize_unit(&once).unwrap();
            for (x, y) in once.as_flat().iter().zip(twice.as_flat()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!(once.first_non_unit().is_none());
        }
    }
}
