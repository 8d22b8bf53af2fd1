//! Similarity-join engines: the nested-loop join and the generic
//! filter-then-search combinator used for the learned filter, LSBF and LSH.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::estimator::CardinalityEstimator;
use crate::filter::{build_filter, LearnedFilter, NegativesSource, XdtSelection};
use crate::lsbf::LsbFilter;
use crate::lsh::{lsh_range_search, LshIndex};
use crate::oracle::{self, NeighborSet};
use crate::sampling::TrainingCurves;

/// Pairs `(r_index, s_index)` plus per-query bookkeeping and timings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinResult {
    /// Sorted by `(s_index, r_index)`, no duplicates.
    pub pairs: Vec<(u32, u32)>,
    /// Whether the filter admitted each query of S.
    pub admitted: Vec<bool>,
    /// Neighbors returned for each query (0 when skipped).
    pub counts: Vec<u32>,
    pub filter_time: f64,
    pub search_time: f64,
    pub total_time: f64,
}

impl JoinResult {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Predicted-positive (searched) queries.
    pub fn ppq(&self) -> usize {
        self.admitted.iter().filter(|&&a| a).count()
    }

    pub fn skipped(&self) -> usize {
        self.admitted.len() - self.ppq()
    }

    /// Total neighbors found, i.e. the pair count.
    pub fn nbrs(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Range search over a fixed R.
pub trait BaseSearcher {
    fn data(&self) -> &Dataset;
    fn search(&self, q: &[f64], eps: f64) -> Result<NeighborSet>;
}

#[derive(Clone, Copy, Debug)]
pub struct BruteForce<'a> {
    pub r: &'a Dataset,
    pub metric: Metric,
}

impl BaseSearcher for BruteForce<'_> {
    fn data(&self) -> &Dataset {
        self.r
    }

    fn search(&self, q: &[f64], eps: f64) -> Result<NeighborSet> {
        oracle::range_search(self.r, q, eps, self.metric)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LshSearcher<'i, 'a> {
    pub index: &'i LshIndex<'a>,
    pub n_p: usize,
    pub metric: Metric,
}

impl BaseSearcher for LshSearcher<'_, '_> {
    fn data(&self) -> &Dataset {
        self.index.data()
    }

    fn search(&self, q: &[f64], eps: f64) -> Result<NeighborSet> {
        lsh_range_search(self.index, q, eps, self.n_p, self.metric)
    }
}

/// Decides, for every query of S, whether it is worth searching.
pub trait QueryFilter {
    fn admit(&self, queries: &Dataset, eps: f64) -> Result<Vec<bool>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AllPass;

#[derive(Clone, Copy, Debug, Default)]
pub struct AllReject;

impl QueryFilter for AllPass {
    fn admit(&self, queries: &Dataset, _eps: f64) -> Result<Vec<bool>> {
        Ok(alloc::vec![true; queries.len()])
    }
}

impl QueryFilter for AllReject {
    fn admit(&self, queries: &Dataset, _eps: f64) -> Result<Vec<bool>> {
        Ok(alloc::vec![false; queries.len()])
    }
}

impl<E: CardinalityEstimator> QueryFilter for LearnedFilter<E> {
    fn admit(&self, queries: &Dataset, eps: f64) -> Result<Vec<bool>> {
        self.query_batch(queries, eps)
    }
}

impl QueryFilter for LsbFilter {
    fn admit(&self, queries: &Dataset, _eps: f64) -> Result<Vec<bool>> {
        queries.iter().map(|q| self.query(q)).collect()
    }
}

impl<F: QueryFilter + ?Sized> QueryFilter for &F {
    fn admit(&self, queries: &Dataset, eps: f64) -> Result<Vec<bool>> {
        (**self).admit(queries, eps)
    }
}

/// Searches every admitted query of `s` with `base`.
pub fn filtered_join<F, B>(filter: &F, base: &B, s: &Dataset, eps: f64, clock: &dyn Clock) -> Result<JoinResult>
where
    F: QueryFilter + ?Sized,
    B: BaseSearcher + ?Sized,
{
    let r = base.data();
    if r.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: r.dim(), found: s.dim() });
    }
    if s.len() > u32::MAX as usize || r.len() > u32::MAX as usize {
        return Err(Error::invalid("join inputs exceed u32 indices"));
    }
    let start = clock.now();
    let admitted = filter.admit(s, eps)?;
    if admitted.len() != s.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "filter returned {} decisions for {} queries",
            admitted.len(),
            s.len()
        )));
    }
    let filter_time = clock.since(start);

    let search_start = clock.now();
    let mut pairs = Vec::new();
    let mut counts = alloc::vec![0u32; s.len()];
    for (j, q) in s.iter().enumerate() {
        if !admitted[j] {
            continue;
        }
        let found = base.search(q, eps)?;
        let mut ids = found.ids;
        ids.sort_unstable();
        ids.dedup();
        counts[j] = ids.len() as u32;
        pairs.extend(ids.into_iter().map(|i| (i as u32, j as u32)));
    }
    let search_time = clock.since(search_start);
    Ok(JoinResult { pairs, admitted, counts, filter_time, search_time, total_time: clock.since(start) })
}

/// Exact nested-loop join: every `(r, s)` with `d(r, s) <= eps`.
pub fn naive_join(r: &Dataset, s: &Dataset, eps: f64, metric: Metric, clock: &dyn Clock) -> Result<JoinResult> {
    filtered_join(&AllPass, &BruteForce { r, metric }, s, eps, clock)
}

/// LSH join without a filter.
pub fn lsh_join(
    index: &LshIndex<'_>,
    s: &Dataset,
    eps: f64,
    n_p: usize,
    metric: Metric,
    clock: &dyn Clock,
) -> Result<JoinResult> {
    filtered_join(&AllPass, &LshSearcher { index, n_p, metric }, s, eps, clock)
}

pub const XJOIN_TAU: u32 = 50;
pub const XJOIN_T_FPR: f64 = 0.05;

/// Filter configuration of the learned join: FPR-based XDT from interpolated targets.
pub fn xjoin_selection(t_fpr: f64) -> Result<XdtSelection> {
    XdtSelection::fpr(t_fpr, NegativesSource::Interpolated)
}

/// Filter configuration for the LSH base: mean-based XDT with τ = 0.
pub fn lsh_filter_selection() -> XdtSelection {
    XdtSelection::mean(NegativesSource::Interpolated)
}

/// Learned filter plus brute-force search over R.
pub struct XJoin<'a, E> {
    pub filter: LearnedFilter<E>,
    pub base: BruteForce<'a>,
}

impl<E: CardinalityEstimator> XJoin<'_, E> {
    pub fn run(&self, s: &Dataset, eps: f64, clock: &dyn Clock) -> Result<JoinResult> {
        filtered_join(&self.filter, &self.base, s, eps, clock)
    }
}

/// Builds the learned join for `eps`. The estimator must be trained on R's
/// prepared training set, whose curves supply the interpolated negatives.
#[allow(clippy::too_many_arguments)]
pub fn make_xjoin<'a, E: CardinalityEstimator>(
    r: &'a Dataset,
    metric: Metric,
    estimator: E,
    curves: &TrainingCurves,
    eps: f64,
    selection: XdtSelection,
    tau: u32,
    eps_domain: (f64, f64),
    clock: &dyn Clock,
) -> Result<XJoin<'a, E>> {
    let filter = build_filter(estimator, r, metric, curves, eps, selection, tau, eps_domain, clock)?;
    Ok(XJoin { filter, base: BruteForce { r, metric } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NoClock;
    use crate::dataset::distance;
    use crate::estimator::OracleEstimator;
    use crate::synth::synth_gaussian_mixture;

    fn quadratic(r: &Dataset, s: &Dataset, eps: f64, metric: Metric) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for j in 0..s.len() {
            for i in 0..r.len() {
                if distance(r.get(i), s.get(j), metric).unwrap() <= eps {
                    out.push((i as u32, j as u32));
                }
            }
        }
        out
    }

    #[test]
    fn naive_matches_quadratic_oracle() {
        let r = synth_gaussian_mixture(200, 8, 3, 0.3, 1).unwrap();
        let s = synth_gaussian_mixture(100, 8, 3, 0.3, 2).unwrap();
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let res = naive_join(&r, &s, 0.5, metric, &NoClock).unwrap();
            assert_eq!(res.pairs, quadratic(&r, &s, 0.5, metric));
            assert_eq!(res.nbrs(), res.len() as u64);
        }
    }

    #[test]
    fn self_join_degenerate_radii() {
        let r = synth_gaussian_mixture(10, 4, 2, 0.3, 3).unwrap();
        let zero = naive_join(&r, &r, 0.0, Metric::Euclidean, &NoClock).unwrap();
        assert_eq!(zero.pairs, (0..10u32).map(|i| (i, i)).collect::<Vec<_>>());
        let all = naive_join(&r, &r, 2.0, Metric::Cosine, &NoClock).unwrap();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn neutral_and_rejecting_filters() {
        let r = synth_gaussian_mixture(80, 4, 2, 0.3, 4).unwrap();
        let s = synth_gaussian_mixture(40, 4, 2, 0.3, 5).unwrap();
        let base = BruteForce { r: &r, metric: Metric::Cosine };
        let naive = naive_join(&r, &s, 0.3, Metric::Cosine, &NoClock).unwrap();
        assert_eq!(filtered_join(&AllPass, &base, &s, 0.3, &NoClock).unwrap().pairs, naive.pairs);
        let none = filtered_join(&AllReject, &base, &s, 0.3, &NoClock).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.skipped(), 40);
        assert_eq!(none.search_time, 0.0);
    }

    #[test]
    fn oracle_filter_keeps_every_pair() {
        let r = synth_gaussian_mixture(150, 6, 3, 0.2, 6).unwrap();
        let s = synth_gaussian_mixture(60, 6, 3, 0.5, 7).unwrap();
        let f = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Cosine), 0.0, 0, (0.0, 2.0));
        let res = filtered_join(&f, &BruteForce { r: &r, metric: Metric::Cosine }, &s, 0.2, &NoClock).unwrap();
        let naive = naive_join(&r, &s, 0.2, Metric::Cosine, &NoClock).unwrap();
        assert_eq!(res.pairs, naive.pairs);
        assert_eq!(res.skipped(), naive.counts.iter().filter(|&&c| c == 0).count());
    }

    #[test]
    fn naive_join_is_symmetric() {
        let r = synth_gaussian_mixture(30, 4, 2, 0.3, 8).unwrap();
        let s = synth_gaussian_mixture(20, 4, 2, 0.3, 9).unwrap();
        let rs = naive_join(&r, &s, 0.4, Metric::Cosine, &NoClock).unwrap();
        let mut sr: Vec<(u32, u32)> = naive_join(&s, &r, 0.4, Metric::Cosine, &NoClock)
            .unwrap()
            .pairs
            .into_iter()
            .map(|(a, b)| (b, a))
            .collect();
        sr.sort_by_key(|&(a, b)| (b, a));
        assert_eq!(rs.pairs, sr);
    }

    #[test]
    fn dimension_mismatch() {
        let r = synth_gaussian_mixture(5, 4, 1, 0.3, 1).unwrap();
        let s = synth_gaussian_mixture(5, 3, 1, 0.3, 1).unwrap();
        assert!(naive_join(&r, &s, 0.4, Metric::Cosine, &NoClock).is_err());
    }
}
