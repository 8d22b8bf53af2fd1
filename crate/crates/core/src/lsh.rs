//! Multi-probe p-stable LSH index for range search.
//!
//! Each of the `l` tables hashes a point to the `k`-tuple of its floored
//! projections. A query probes its own bucket and then perturbed buckets in
//! which some coordinates move by ±1. Sets with fewer perturbed coordinates
//! come first; within one size, cheaper sets come first, the cost of moving a
//! coordinate being the distance of the projection to that bucket boundary.
//! Every candidate is verified with the exact distance.

use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::{HashMap, HashSet};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::oracle::NeighborSet;
use crate::phash::{floor_i32, PStableFamily};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub k: usize,
    pub l: usize,
    pub w: f64,
    pub seed: u64,
}

type Table = HashMap<Box<[i32]>, Vec<u32>>;

#[derive(Clone, Debug)]
pub struct LshIndex<'a> {
    r: &'a Dataset,
    params: LshParams,
    family: PStableFamily,
    tables: Vec<Table>,
}

pub fn lsh_build(r: &Dataset, params: LshParams) -> Result<LshIndex<'_>> {
    if r.is_empty() {
        return Err(Error::Empty);
    }
    if r.len() > u32::MAX as usize {
        return Err(Error::invalid("dataset too large for the LSH index"));
    }
    let family = PStableFamily::new(r.dim(), params.k, params.l, params.w, params.seed)?;
    let mut key = vec![0; params.k];
    let tables = (0..params.l)
        .map(|g| {
            let mut t = Table::new();
            for (i, v) in r.iter().enumerate() {
                family.key_into(g, v, &mut key);
                t.entry_ref(key.as_slice()).or_default().push(i as u32);
            }
            t
        })
        .collect();
    Ok(LshIndex { r, params, family, tables })
}

impl<'a> LshIndex<'a> {
    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn data(&self) -> &'a Dataset {
        self.r
    }

    pub fn bucket_count(&self, table: usize) -> usize {
        self.tables[table].len()
    }

    pub fn bucket_sizes(&self, table: usize) -> impl Iterator<Item = usize> + '_ {
        self.tables[table].values().map(Vec::len)
    }

    /// Candidate ids from `n_p` probed buckets per table, sorted and deduplicated.
    pub fn candidates(&self, q: &[f64], n_p: usize) -> Result<Vec<u32>> {
        if q.len() != self.r.dim() {
            return Err(Error::DimensionMismatch { expected: self.r.dim(), found: q.len() });
        }
        if n_p == 0 {
            return Err(Error::invalid("n_p must be at least 1"));
        }
        let k = self.params.k;
        let mut proj = vec![0.0; k];
        let mut key = vec![0; k];
        let mut out = Vec::new();
        for (g, table) in self.tables.iter().enumerate() {
            self.family.project_into(g, q, &mut proj);
            for (h, p) in key.iter_mut().zip(&proj) {
                *h = floor_i32(*p);
            }
            for probe in probe_sequence(&proj, &key, n_p) {
                if let Some(ids) = table.get(probe.as_slice()) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Verified neighbors of `q` among the probed candidates.
pub fn lsh_range_search(idx: &LshIndex<'_>, q: &[f64], eps: f64, n_p: usize, metric: Metric) -> Result<NeighborSet> {
    let cands = idx.candidates(q, n_p)?;
    let qnorm = crate::dataset::l2_norm(q);
    let ids = cands
        .into_iter()
        .map(|i| i as usize)
        .filter(|&i| idx.r.distance_to(i, q, qnorm, metric) <= eps)
        .collect();
    Ok(NeighborSet { eps, ids })
}

#[derive(Clone, Copy)]
struct Step {
    coord: usize,
    delta: i32,
    cost: f64,
}

struct Candidate {
    score: f64,
    picks: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so the max-heap pops the cheapest set; ties by picks.
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| other.picks.cmp(&self.picks))
    }
}

/// Keys of the first `n_p` buckets to probe for one table.
pub fn probe_sequence(proj: &[f64], key: &[i32], n_p: usize) -> Vec<Vec<i32>> {
    let k = key.len();
    let mut out = vec![key.to_vec()];
    if n_p <= 1 {
        return out;
    }
    let mut steps: Vec<Step> = (0..k)
        .flat_map(|j| {
            let frac = proj[j] - key[j] as f64;
            [Step { coord: j, delta: -1, cost: frac }, Step { coord: j, delta: 1, cost: 1.0 - frac }]
        })
        .collect();
    steps.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.coord.cmp(&b.coord)).then(a.delta.cmp(&b.delta)));
    let n = steps.len();
    for size in 1..=k {
        let first: Vec<usize> = (0..size).collect();
        let mut heap = BinaryHeap::new();
        let mut seen = HashSet::new();
        seen.insert(first.clone());
        heap.push(Candidate { score: first.iter().map(|&i| steps[i].cost).sum(), picks: first });
        while let Some(Candidate { picks, .. }) = heap.pop() {
            let mut coords: Vec<usize> = picks.iter().map(|&i| steps[i].coord).collect();
            coords.sort_unstable();
            if coords.windows(2).all(|w| w[0] != w[1]) {
                let mut probe = key.to_vec();
                for &i in &picks {
                    probe[steps[i].coord] += steps[i].delta;
                }
                out.push(probe);
                if out.len() == n_p {
                    return out;
                }
            }
            for p in 0..size {
                let limit = if p + 1 == size { n } else { picks[p + 1] };
                if picks[p] + 1 < limit {
                    let mut next = picks.clone();
                    next[p] += 1;
                    if seen.insert(next.clone()) {
                        let score = next.iter().map(|&i| steps[i].cost).sum();
                        heap.push(Candidate { score, picks: next });
                    }
                }
            }
        }
    }
    out
}
