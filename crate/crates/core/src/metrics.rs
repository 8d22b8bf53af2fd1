//! Filter confusion, join recall and related bookkeeping.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::join::JoinResult;
use crate::oracle;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `fp / (fp + tn)`, `None` without groundtruth negatives.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `fn / (fn + tp)`, `None` without groundtruth positives.
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.fn_ + self.tp)
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Confusion of predicted-positive flags against `true count > tau`.
pub fn filter_confusion(flags: &[bool], true_counts: &[u32], tau: u32) -> Result<ConfusionCounts> {
    if flags.len() != true_counts.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} flags for {} counts",
            flags.len(),
            true_counts.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&pred, &count) in flags.iter().zip(true_counts) {
        match (pred, count > tau) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `|found ∩ gt| / |gt|` over sorted, deduplicated pair lists; 1 when `gt` is empty.
pub fn recall(found: &[(u32, u32)], groundtruth: &[(u32, u32)]) -> f64 {
    if groundtruth.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut hit) = (0, 0, 0usize);
    while i < found.len() && j < groundtruth.len() {
        match found[i].cmp(&groundtruth[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                hit += 1;
                i += 1;
                j += 1;
            }
        }
    }
    hit as f64 / groundtruth.len() as f64
}

/// Recall on arbitrary pair lists (sorted internally).
pub fn recall_unsorted(found: &[(u32, u32)], groundtruth: &[(u32, u32)]) -> f64 {
    let prep = |v: &[(u32, u32)]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    recall(&prep(found), &prep(groundtruth))
}

/// Fraction of queries with at most `tau` neighbors in `r`.
pub fn negative_query_portion(r: &Dataset, s: &Dataset, eps: f64, tau: u32, metric: Metric) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    let counts = oracle::counts_at(r, s, eps, metric)?;
    Ok(portion_at_most(&counts, tau))
}

pub fn portion_at_most(counts: &[u32], tau: u32) -> f64 {
    counts.iter().filter(|&&c| c <= tau).count() as f64 / counts.len().max(1) as f64
}

/// Join quality and size summary against a groundtruth join.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinMetrics {
    pub recall: f64,
    pub total_time: f64,
    pub nbrs: u64,
    pub ppq: u64,
    /// `nbrs / ppq`, `None` when nothing was searched.
    pub anpq: Option<f64>,
}

impl JoinMetrics {
    pub fn new(result: &JoinResult, groundtruth: &JoinResult) -> Self {
        let nbrs = result.nbrs();
        let ppq = result.ppq() as u64;
        Self {
            recall: recall(&result.pairs, &groundtruth.pairs),
            total_time: result.total_time,
            nbrs,
            ppq,
            anpq: (ppq > 0).then(|| nbrs as f64 / ppq as f64),
        }
    }

    /// `anpq * ppq == nbrs` up to the rounding of one division.
    pub fn bookkeeping_holds(&self) -> bool {
        match self.anpq {
            None => self.nbrs == 0 && self.ppq == 0,
            Some(a) => libm::round(a * self.ppq as f64) as u64 == self.nbrs,
        }
    }
}

/// Per-query neighbor counts of the groundtruth join.
pub fn true_counts(groundtruth: &JoinResult) -> Vec<u32> {
    groundtruth.counts.clone()
}
