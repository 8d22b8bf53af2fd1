//! Exact brute-force range search and cardinality tables.
//!
//! Everything here is the groundtruth for training targets, negative
//! identification and recall. Thresholds are closed: a point at exactly
//! distance `eps` is a neighbor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{l2_norm, Dataset, Metric};
use crate::error::{Error, Result};

/// Indices of `R` within `eps` of a query, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSet {
    pub eps: f64,
    pub ids: Vec<usize>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("epsilon {eps} must be >= 0")));
    }
    Ok(())
}

pub fn range_search(r: &Dataset, q: &[f64], eps: f64, metric: Metric) -> Result<NeighborSet> {
    r.check_query(q)?;
    check_eps(eps)?;
    let qn = l2_norm(q);
    let ids = (0..r.len())
        .filter(|&i| r.distance_to(i, q, qn, metric) <= eps)
        .collect();
    Ok(NeighborSet { eps, ids })
}

pub fn range_count(r: &Dataset, q: &[f64], eps: f64, metric: Metric) -> Result<usize> {
    r.check_query(q)?;
    check_eps(eps)?;
    let qn = l2_norm(q);
    Ok((0..r.len())
        .filter(|&i| r.distance_to(i, q, qn, metric) <= eps)
        .count())
}

/// Exact neighbor counts in `r` of every row of `probes` at one `eps`.
pub fn counts_at(r: &Dataset, probes: &Dataset, eps: f64, metric: Metric) -> Result<Vec<u32>> {
    if probes.dim() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            found: probes.dim(),
        });
    }
    probes
        .iter()
        .map(|q| range_count(r, q, eps, metric).map(|c| c as u32))
        .collect()
}

/// Groundtruth neighbor counts per probe point over an ascending ε grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CardinalityTable {
    points: Vec<usize>,
    eps_grid: Vec<f64>,
    counts: Vec<u32>,
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("epsilon grid needs at least 2 values"));
    }
    if let Some(i) = grid.iter().position(|e| !e.is_finite()) {
        return Err(Error::NonAscendingGrid { index: i });
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::NonAscendingGrid { index: i + 1 });
    }
    Ok(())
}

impl CardinalityTable {
    /// Validates shape, grid ordering and row monotonicity.
    pub fn from_parts(points: Vec<usize>, eps_grid: Vec<f64>, counts: Vec<u32>) -> Result<Self> {
        check_grid(&eps_grid)?;
        let m = eps_grid.len();
        if counts.len() != points.len() * m {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for {} points x {m} grid values",
                counts.len(),
                points.len()
            )));
        }
        if let Some(row) = counts.chunks_exact(m).position(|r| r.windows(2).any(|w| w[0] > w[1])) {
            return Err(Error::ShapeMismatch(format!("row {row} decreases along the grid")));
        }
        Ok(Self {
            points,
            eps_grid,
            counts,
        })
    }

    /// Point indices the rows refer to.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn eps_grid(&self) -> &[f64] {
        &self.eps_grid
    }

    pub fn m(&self) -> usize {
        self.eps_grid.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let m = self.m();
        &self.counts[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.counts.chunks_exact(self.m())
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Relabels the rows with explicit point indices.
    pub fn with_points(mut self, points: Vec<usize>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                points.len(),
                self.points.len()
            )));
        }
        self.points = points;
        Ok(self)
    }
}

/// Counts for every `(probe, eps_grid[j])` cell.
///
/// One distance per (probe, R-point) pair is bucketed against the grid and the
/// buckets are prefix-summed. A probe that is itself a member of `r` counts
/// itself. Row labels are `0..probes.len()`.
pub fn cardinality_grid(
    r: &Dataset,
    probes: &Dataset,
    eps_grid: &[f64],
    metric: Metric,
) -> Result<CardinalityTable> {
    check_grid(eps_grid)?;
    if probes.dim() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            found: probes.dim(),
        });
    }
    let m = eps_grid.len();
    let mut counts = vec![0u32; probes.len() * m];
    let mut hist = vec![0u32; m + 1];
    for (p, q) in probes.iter().enumerate() {
        hist.iter_mut().for_each(|h| *h = 0);
        let qn = probes.norm(p);
        for i in 0..r.len() {
            let d = r.distance_to(i, q, qn, metric);
            // First grid slot whose radius admits this distance.
            hist[eps_grid.partition_point(|&e| e < d)] += 1;
        }
        let row = &mut counts[p * m..(p + 1) * m];
        let mut acc = 0u32;
        for (slot, h) in row.iter_mut().zip(&hist) {
            acc += h;
            *slot = acc;
        }
    }
    Ok(CardinalityTable {
        points: (0..probes.len()).collect(),
        eps_grid: eps_grid.to_vec(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::distance;
    use crate::synth::synth_gaussian_mixture;
    use alloc::vec::Vec;
    use rand::seq::SliceRandom;

    fn random_ds(n: usize, d: usize, seed: u64) -> Dataset {
        synth_gaussian_mixture(n, d, 3, 0.4, seed).unwrap()
    }

    #[test]
    fn zero_radius_finds_the_point_itself() {
        let r = random_ds(30, 8, 1);
        let ns = range_search(&r, r.get(5), 0.0, Metric::Euclidean).unwrap();
        assert!(ns.ids.contains(&5));
    }

    #[test]
    fn huge_radius_saturates() {
        let r = random_ds(30, 8, 1);
        let ns = range_search(&r, r.get(0), 10.0, Metric::Euclidean).unwrap();
        assert_eq!(ns.ids, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn range_search_matches_pairwise_oracle() {
        let r = random_ds(100, 8, 2);
        let q = random_ds(10, 8, 3);
        for m in [Metric::Euclidean, Metric::Cosine] {
            for query in q.iter() {
                let got = range_search(&r, query, 0.7, m).unwrap();
                let want: Vec<usize> = (0..r.len())
                    .filter(|&i| distance(r.get(i), query, m).unwrap() <= 0.7)
                    .collect();
                assert_eq!(got.ids, want);
                assert!(got.ids.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn closed_threshold_includes_ties() {
        let r = Dataset::from_rows("t", Metric::Euclidean, [[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(range_count(&r, &[0.0, 0.0], 5.0, Metric::Euclidean).unwrap(), 2);
    }

    #[test]
    fn count_matches_search_and_is_monotone() {
        let r = random_ds(200, 8, 4);
        let q = random_ds(20, 8, 5);
        for query in q.iter() {
            let n = range_count(&r, query, 0.5, Metric::Cosine).unwrap();
            assert_eq!(n, range_search(&r, query, 0.5, Metric::Cosine).unwrap().len());
            assert!(range_count(&r, query, 0.4, Metric::Cosine).unwrap() <= n);
        }
    }

    #[test]
    fn empty_neighborhood_counts_zero() {
        let r = Dataset::from_rows("t", Metric::Euclidean, [[1.0, 0.0]]).unwrap();
        assert_eq!(range_count(&r, &[-1.0, 0.0], 0.5, Metric::Euclidean).unwrap(), 0);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let r = random_ds(5, 4, 1);
        assert!(matches!(
            range_search(&r, &[0.0; 3], 0.1, Metric::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grid_matches_cellwise_recount() {
        let r = random_ds(300, 8, 6);
        let probes = random_ds(50, 8, 7);
        let grid: Vec<f64> = (0..10).map(|j| 0.2 + 0.1 * j as f64).collect();
        let t = cardinality_grid(&r, &probes, &grid, Metric::Cosine).unwrap();
        for (p, q) in probes.iter().enumerate() {
            for (j, &e) in grid.iter().enumerate() {
                let want = range_count(&r, q, e, Metric::Cosine).unwrap() as u32;
                assert_eq!(t.row(p)[j], want, "probe {p} eps {e}");
            }
            assert!(t.row(p).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn member_probe_counts_itself() {
        let r = random_ds(40, 8, 8);
        let probe = r.subset(&[3], "p").unwrap();
        let t = cardinality_grid(&r, &probe, &[0.0, 0.1, 0.2], Metric::Euclidean).unwrap();
        assert!(t.row(0).iter().all(|&c| c >= 1));
    }

    #[test]
    fn non_ascending_grid_rejected() {
        let r = random_ds(5, 4, 1);
        assert_eq!(
            cardinality_grid(&r, &r, &[0.1, 0.3, 0.2], Metric::Euclidean).unwrap_err(),
            Error::NonAscendingGrid { index: 2 }
        );
        assert!(cardinality_grid(&r, &r, &[0.1], Metric::Euclidean).is_err());
    }

    #[test]
    fn results_invariant_under_reordering() {
        let r = random_ds(80, 6, 9);
        let mut perm: Vec<usize> = (0..80).collect();
        perm.shuffle(&mut crate::rng::seeded(1, crate::rng::Purpose::Evaluation));
        let shuffled = r.subset(&perm, "s").unwrap();
        let q = r.get(17);
        let a = range_search(&r, q, 0.6, Metric::Cosine).unwrap().ids;
        let mut b: Vec<usize> = range_search(&shuffled, q, 0.6, Metric::Cosine)
            .unwrap()
            .ids
            .into_iter()
            .map(|i| perm[i])
            .collect();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn from_parts_rejects_decreasing_rows() {
        assert!(CardinalityTable::from_parts(alloc::vec![0], alloc::vec![0.1, 0.2], alloc::vec![3, 2]).is_err());
        assert!(CardinalityTable::from_parts(alloc::vec![0], alloc::vec![0.1, 0.2], alloc::vec![2, 3]).is_ok());
    }
}
