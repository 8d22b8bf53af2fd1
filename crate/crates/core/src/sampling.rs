//! Training-condition selection and interpolated targets.
//!
//! Each training point has one candidate row of `m` `(ε, count)` pairs taken
//! from a [`CardinalityTable`]. A selection strategy keeps `s` of them:
//!
//! - [`Strategy::Uniform`] takes fixed, evenly spaced grid positions.
//! - [`Strategy::Atcs`] bins the row's targets into `s` equal-width bins over
//!   `[t_min, t_max]`, draws `floor(s * |bin| / m)` pairs from every bin, then
//!   tops the selection up to `s` with uniform draws from the unselected pairs.
//!
//! Between two retained ε values of a point the count curve is treated as
//! linear, which yields approximate targets at any ε without a range search.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::oracle::CardinalityTable;
use crate::rng::{self, Purpose};

/// Evenly spaced candidate ε values, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGrid {
    pub c_min: f64,
    pub c_max: f64,
    pub values: Vec<f64>,
}

impl EpsilonGrid {
    pub fn new(c_min: f64, c_max: f64, m: usize) -> Result<Self> {
        if !(c_min.is_finite() && c_max.is_finite()) || !(c_min < c_max) {
            return Err(Error::invalid(format!("epsilon range [{c_min}, {c_max}] is inverted or empty")));
        }
        if m < 2 {
            return Err(Error::invalid(format!("epsilon grid needs m >= 2, got {m}")));
        }
        let step = (c_max - c_min) / (m - 1) as f64;
        let mut values: Vec<f64> = (0..m).map(|j| c_min + step * j as f64).collect();
        values[m - 1] = c_max;
        Ok(Self { c_min, c_max, values })
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    /// Default grid for a metric: `[0.4, 0.9]` for cosine, `[0.5, 2.0]` for Euclidean, 100 values.
    pub fn default_for(metric: crate::Metric) -> Self {
        match metric {
            crate::Metric::Cosine => Self::new(0.4, 0.9, 100),
            crate::Metric::Euclidean => Self::new(0.5, 2.0, 100),
        }
        .expect("default grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Atcs,
}

/// Evenly spaced grid positions: `0`, then `ceil(m * j / (s - 1)) - 1` for `j = 1..s`.
///
/// For `m = 100, s = 6` this is `{0, 19, 39, 59, 79, 99}`.
pub fn uniform_indices(m: usize, s: usize) -> Result<Vec<usize>> {
    if s > m {
        return Err(Error::SampleTooLarge { s, m });
    }
    if s == 0 {
        return Ok(Vec::new());
    }
    if s == 1 {
        return Ok(alloc::vec![0]);
    }
    let mut out = Vec::with_capacity(s);
    out.push(0);
    for j in 1..s {
        out.push((m * j).div_ceil(s - 1) - 1);
    }
    Ok(out)
}

/// Outcome of one adaptive selection over a candidate row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtcsSelection {
    /// Selected grid positions, ascending.
    pub indices: Vec<usize>,
    /// Members of each target bin; empty for a degenerate (flat) row.
    pub bin_sizes: Vec<usize>,
    /// Pairs drawn from each bin before the top-up.
    pub stage_one: Vec<usize>,
    /// Pairs added by the uniform top-up.
    pub top_up: usize,
}

/// Bin of `t` among `s` equal-width bins over `[t_min, t_max]`; the last bin is closed.
fn target_bin(t: f64, t_min: f64, t_max: f64, s: usize) -> usize {
    let pos = (t - t_min) * s as f64 / (t_max - t_min);
    (crate::math::floor(pos) as usize).min(s - 1)
}

/// Adaptive selection of `s` grid positions from a row of targets.
pub fn atcs_indices<R: Rng + ?Sized>(targets: &[f64], s: usize, rng: &mut R) -> Result<AtcsSelection> {
    let m = targets.len();
    if s > m {
        return Err(Error::SampleTooLarge { s, m });
    }
    if s == 0 {
        return Ok(AtcsSelection {
            indices: Vec::new(),
            bin_sizes: Vec::new(),
            stage_one: Vec::new(),
            top_up: 0,
        });
    }
    let t_min = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > t_min) {
        // Flat row: one logical bin, plain distinct draws.
        let mut indices = index::sample(rng, m, s).into_vec();
        indices.sort_unstable();
        return Ok(AtcsSelection {
            indices,
            bin_sizes: Vec::new(),
            stage_one: Vec::new(),
            top_up: s,
        });
    }

    let mut bins: Vec<Vec<usize>> = (0..s).map(|_| Vec::new()).collect();
    for (j, &t) in targets.iter().enumerate() {
        bins[target_bin(t, t_min, t_max, s)].push(j);
    }

    let mut selected = alloc::vec![false; m];
    let mut indices = Vec::with_capacity(s);
    let mut stage_one = Vec::with_capacity(s);
    for bin in &bins {
        let take = s * bin.len() / m;
        stage_one.push(take);
        for k in index::sample(rng, bin.len(), take) {
            selected[bin[k]] = true;
            indices.push(bin[k]);
        }
    }

    let missing = s - indices.len();
    if missing > 0 {
        let pool: Vec<usize> = (0..m).filter(|&j| !selected[j]).collect();
        for k in index::sample(rng, pool.len(), missing) {
            indices.push(pool[k]);
        }
    }
    indices.sort_unstable();
    Ok(AtcsSelection {
        indices,
        bin_sizes: bins.iter().map(Vec::len).collect(),
        stage_one,
        top_up: missing,
    })
}

fn check_row(eps: &[f64], targets: &[f64]) -> Result<()> {
    if eps.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} epsilon values for {} targets",
            eps.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Uniformly spaced `(ε, target)` pairs from one row.
pub fn select_uniform(eps: &[f64], targets: &[f64], s: usize) -> Result<Vec<(f64, f64)>> {
    check_row(eps, targets)?;
    Ok(uniform_indices(eps.len(), s)?
        .into_iter()
        .map(|j| (eps[j], targets[j]))
        .collect())
}

/// Adaptively selected `(ε, target)` pairs from one row.
pub fn select_atcs<R: Rng + ?Sized>(
    eps: &[f64],
    targets: &[f64],
    s: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    check_row(eps, targets)?;
    Ok(atcs_indices(targets, s, rng)?
        .indices
        .into_iter()
        .map(|j| (eps[j], targets[j]))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTuple {
    pub point_index: usize,
    pub eps: f64,
    pub target: f64,
}

/// `s` tuples per point, grouped by point and ascending in ε within a point.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedTrainingSet {
    pub tuples: Vec<TrainingTuple>,
    pub strategy: Strategy,
    pub s: usize,
    pub seed: u64,
    /// Tuples that came from the random top-up (always 0 for uniform).
    pub top_up: usize,
}

impl PreparedTrainingSet {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Share of tuples drawn by the random top-up.
    pub fn top_up_fraction(&self) -> f64 {
        if self.tuples.is_empty() {
            0.0
        } else {
            self.top_up as f64 / self.tuples.len() as f64
        }
    }

    /// Per-point `(ε, target)` curves for interpolation.
    pub fn curves(&self) -> TrainingCurves {
        TrainingCurves::from_tuples(&self.tuples)
    }
}

/// Selects training conditions for every point of `r` from its table row.
///
/// Each point draws from its own stream derived from `(seed, point_index)`.
pub fn prepare_training_set(
    r: &Dataset,
    table: &CardinalityTable,
    strategy: Strategy,
    s: usize,
    seed: u64,
) -> Result<PreparedTrainingSet> {
    if table.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(&p) = table.points().iter().find(|&&p| p >= r.len()) {
        return Err(Error::ShapeMismatch(format!("table row refers to point {p} outside R")));
    }
    let m = table.m();
    if s > m {
        return Err(Error::SampleTooLarge { s, m });
    }
    if s == 0 {
        return Err(Error::invalid("sampling number s must be >= 1"));
    }
    let grid = table.eps_grid();
    let uniform = uniform_indices(m, s)?;
    let mut tuples = Vec::with_capacity(s * table.len());
    let mut top_up = 0;
    let mut row_f = alloc::vec![0.0; m];
    for (row, &point_index) in table.rows().zip(table.points()) {
        for (dst, &c) in row_f.iter_mut().zip(row) {
            *dst = c as f64;
        }
        let picks = match strategy {
            Strategy::Uniform => uniform.clone(),
            Strategy::Atcs => {
                let mut rng = rng::stream(seed, Purpose::TrainingSelection, point_index as u64);
                let sel = atcs_indices(&row_f, s, &mut rng)?;
                top_up += sel.top_up;
                sel.indices
            }
        };
        tuples.extend(picks.into_iter().map(|j| TrainingTuple {
            point_index,
            eps: grid[j],
            target: row_f[j],
        }));
    }
    Ok(PreparedTrainingSet {
        tuples,
        strategy,
        s,
        seed,
        top_up,
    })
}

/// `per_point` tuples per row at grid positions drawn uniformly at random
/// (distinct within a point). Used to build held-out evaluation sets.
pub fn random_condition_tuples(table: &CardinalityTable, per_point: usize, seed: u64) -> Result<Vec<TrainingTuple>> {
    let m = table.m();
    if per_point > m {
        return Err(Error::SampleTooLarge { s: per_point, m });
    }
    let mut out = Vec::with_capacity(per_point * table.len());
    for (row, &point_index) in table.rows().zip(table.points()) {
        let mut rng = rng::stream(seed, Purpose::Evaluation, point_index as u64);
        let mut picks = index::sample(&mut rng, m, per_point).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|j| TrainingTuple {
            point_index,
            eps: table.eps_grid()[j],
            target: row[j] as f64,
        }));
    }
    Ok(out)
}

/// Linear interpolation of the count curve between two retained ε values.
///
/// `eps_query` is clamped into `[eps_lo, eps_hi]` and the result never leaves
/// the range spanned by `t_lo` and `t_hi`.
pub fn interpolate_target(eps_lo: f64, t_lo: f64, eps_hi: f64, t_hi: f64, eps_query: f64) -> Result<f64> {
    if !(eps_lo < eps_hi) {
        return Err(Error::invalid(format!("interpolation needs eps_lo < eps_hi, got {eps_lo} >= {eps_hi}")));
    }
    let e = eps_query.clamp(eps_lo, eps_hi);
    let t = t_lo + (t_hi - t_lo) / (eps_hi - eps_lo) * (e - eps_lo);
    Ok(t.clamp(t_lo.min(t_hi), t_lo.max(t_hi)))
}

/// Retained `(ε, target)` pairs of every training point, ascending in ε.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingCurves {
    points: Vec<usize>,
    curves: Vec<Vec<(f64, f64)>>,
}

impl TrainingCurves {
    /// Groups tuples by point (in first-seen order) and sorts each group by ε.
    pub fn from_tuples(tuples: &[TrainingTuple]) -> Self {
        let mut points: Vec<usize> = Vec::new();
        let mut curves: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut slot: hashbrown::HashMap<usize, usize> = hashbrown::HashMap::new();
        for t in tuples {
            let k = *slot.entry(t.point_index).or_insert_with(|| {
                points.push(t.point_index);
                curves.push(Vec::new());
                points.len() - 1
            });
            curves[k].push((t.eps, t.target));
        }
        for c in &mut curves {
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Self { points, curves }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn curve(&self, k: usize) -> &[(f64, f64)] {
        &self.curves[k]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Approximate target of one point's curve at `eps_query`, clamped at the ends.
pub fn approx_target(curve: &[(f64, f64)], eps_query: f64) -> Option<f64> {
    let n = curve.len();
    if n < 2 {
        return None;
    }
    let above = curve.partition_point(|&(e, _)| e <= eps_query);
    if above == 0 {
        return Some(curve[0].1);
    }
    let lo = above - 1;
    if lo == n - 1 {
        return Some(curve[n - 1].1);
    }
    let (e0, t0) = curve[lo];
    let (e1, t1) = curve[lo + 1];
    interpolate_target(e0, t0, e1, t1, eps_query).ok()
}

/// Approximate target at `eps_query` for every point, in [`TrainingCurves::points`] order.
pub fn approx_targets_for_eps(curves: &TrainingCurves, eps_query: f64) -> Result<Vec<f64>> {
    curves
        .curves
        .iter()
        .zip(&curves.points)
        .map(|(c, &point)| {
            approx_target(c, eps_query).ok_or(Error::TooFewTrainingEps { point, count: c.len() })
        })
        .collect()
}
