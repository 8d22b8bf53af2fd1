//! Synthetic Gaussian-mixture datasets on the unit sphere.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{l2_norm, Dataset, Metric};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Which mixture component produced a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Cluster(usize),
    /// Uniform on the unit sphere.
    Background,
}

#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub dataset: Dataset,
    pub labels: Vec<Component>,
}

/// Isotropic Gaussian clusters around random unit-vector centers, optionally
/// mixed with a uniform background. Samples are projected to the unit sphere.
///
/// The centers depend only on the construction seed, so two samples drawn with
/// different sample seeds come from the same distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    centers: Vec<Vec<f64>>,
    spread: f64,
    weights: Vec<f64>,
    background: f64,
}

fn gaussian_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl GaussianMixture {
    pub fn new(dim: usize, k: usize, spread: f64, seed: u64) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::invalid("mixture needs d >= 1 and k >= 1"));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::invalid(format!("spread {spread} must be finite and >= 0")));
        }
        let mut rng = rng::seeded(seed, Purpose::MixtureCenters);
        let centers = (0..k).map(|_| gaussian_unit(&mut rng, dim)).collect();
        Ok(Self {
            dim,
            centers,
            spread,
            weights: alloc::vec![1.0 / k as f64; k],
            background: 0.0,
        })
    }

    /// Mixture around explicit centers, each normalized to unit length.
    pub fn from_centers(centers: Vec<Vec<f64>>, spread: f64) -> Result<Self> {
        let dim = centers.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::invalid("mixture needs at least one non-empty center"));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::invalid(format!("spread {spread} must be finite and >= 0")));
        }
        let mut unit = Vec::with_capacity(centers.len());
        for (i, c) in centers.into_iter().enumerate() {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
            }
            let n = l2_norm(&c);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::ZeroNorm { index: i });
            }
            unit.push(c.into_iter().map(|x| x / n).collect());
        }
        let k = unit.len();
        Ok(Self { dim, centers: unit, spread, weights: alloc::vec![1.0 / k as f64; k], background: 0.0 })
    }

    /// Relative cluster weights (normalized internally).
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.centers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} clusters",
                weights.len(),
                self.centers.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(Error::invalid("cluster weights must be >= 0 with positive sum"));
        }
        self.weights = weights.iter().map(|w| w / total).collect();
        Ok(self)
    }

    /// Fraction of samples drawn uniformly from the sphere instead of a cluster.
    pub fn with_background(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!("background fraction {fraction} outside [0, 1]")));
        }
        self.background = fraction;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    fn draw(&self, rng: &mut impl Rng, component: Component) -> Vec<f64> {
        match component {
            Component::Background => gaussian_unit(rng, self.dim),
            Component::Cluster(c) => {
                let center = &self.centers[c];
                let v: Vec<f64> = center
                    .iter()
                    .map(|&x| x + self.spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let n = l2_norm(&v);
                if n > 1e-12 {
                    v.into_iter().map(|x| x / n).collect()
                } else {
                    center.clone()
                }
            }
        }
    }

    fn pick(&self, rng: &mut impl Rng) -> Component {
        if self.background > 0.0 && rng.random::<f64>() < self.background {
            return Component::Background;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Component::Cluster(c);
            }
        }
        Component::Cluster(self.centers.len() - 1)
    }

    /// `n` samples with their component labels.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledSample> {
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut rng = rng::seeded(seed, Purpose::MixtureSamples);
        let mut data = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = self.pick(&mut rng);
            data.extend(self.draw(&mut rng, c));
            labels.push(c);
        }
        let dataset = Dataset::from_flat(format!("gmm-{n}x{}", self.dim), Metric::Cosine, self.dim, data)?;
        Ok(LabeledSample { dataset, labels })
    }

    /// `n` samples from one component only.
    pub fn sample_component(&self, component: Component, n: usize, seed: u64) -> Result<Dataset> {
        if let Component::Cluster(c) = component {
            if c >= self.centers.len() {
                return Err(Error::invalid(format!("cluster {c} out of range")));
            }
        }
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut rng = rng::seeded(seed, Purpose::MixtureSamples);
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            data.extend(self.draw(&mut rng, component));
        }
        Dataset::from_flat(format!("gmm-part-{n}x{}", self.dim), Metric::Cosine, self.dim, data)
    }
}

/// `n` unit vectors from `k` equally weighted isotropic clusters.
pub fn synth_gaussian_mixture(n: usize, d: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset> {
    Ok(GaussianMixture::new(d, k, spread, seed)?.sample(n, seed)?.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::distance;

    #[test]
    fn collapsed_cluster_is_tight() {
        let ds = synth_gaussian_mixture(100, 8, 1, 1e-9, 5).unwrap();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                assert!(distance(ds.get(i), ds.get(j), Metric::Euclidean).unwrap() < 1e-3);
            }
        }
    }

    #[test]
    fn produces_exactly_n_unit_vectors() {
        let ds = synth_gaussian_mixture(1000, 16, 4, 0.2, 9).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.dim(), 16);
        assert!(ds.first_non_unit().is_none());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_gaussian_mixture(50, 4, 3, 0.1, 1).unwrap();
        let b = synth_gaussian_mixture(50, 4, 3, 0.1, 1).unwrap();
        let c = synth_gaussian_mixture(50, 4, 3, 0.1, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn weights_and_background_shape_labels() {
        let g = GaussianMixture::new(8, 2, 0.1, 3)
            .unwrap()
            .with_weights(&[9.0, 1.0])
            .unwrap()
            .with_background(0.5)
            .unwrap();
        let s = g.sample(4000, 4).unwrap();
        let bg = s.labels.iter().filter(|c| **c == Component::Background).count();
        let c0 = s.labels.iter().filter(|c| **c == Component::Cluster(0)).count();
        assert!((bg as f64 / 4000.0 - 0.5).abs() < 0.05);
        assert!((c0 as f64 / 4000.0 - 0.45).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianMixture::new(0, 1, 0.1, 0).is_err());
        assert!(GaussianMixture::new(2, 0, 0.1, 0).is_err());
        assert!(GaussianMixture::new(2, 2, 0.1, 0).unwrap().with_weights(&[1.0]).is_err());
    }
}
