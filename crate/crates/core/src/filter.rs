//! The learned filter: a cardinality estimator, a decision threshold (XDT)
//! and a neighbor threshold τ.
//!
//! A query is *predicted positive* when its predicted count is strictly above
//! the XDT. A training point is a *groundtruth negative* when it has no more
//! than τ neighbors. The threshold is derived offline from the predictions the
//! estimator makes for the training negatives, either as their mean or as the
//! order statistic that keeps the training false-positive rate within a
//! tolerance.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::estimator::CardinalityEstimator;
use crate::oracle;
use crate::sampling::{approx_targets_for_eps, TrainingCurves};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XdtMethod {
    Mean,
    Fpr,
}

/// Where the targets used to find training negatives come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativesSource {
    /// Brute-force counts at the query ε.
    Exact,
    /// Linear interpolation between each point's retained training ε values.
    Interpolated,
}

pub const DEFAULT_T_FPR: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XdtSelection {
    pub method: XdtMethod,
    /// Present iff `method` is [`XdtMethod::Fpr`].
    pub t_fpr: Option<f64>,
    pub source: NegativesSource,
}

impl XdtSelection {
    pub fn mean(source: NegativesSource) -> Self {
        Self { method: XdtMethod::Mean, t_fpr: None, source }
    }

    pub fn fpr(t_fpr: f64, source: NegativesSource) -> Result<Self> {
        check_t_fpr(t_fpr)?;
        Ok(Self { method: XdtMethod::Fpr, t_fpr: Some(t_fpr), source })
    }

    pub fn validate(&self) -> Result<()> {
        match (self.method, self.t_fpr) {
            (XdtMethod::Fpr, Some(t)) => check_t_fpr(t),
            (XdtMethod::Mean, None) => Ok(()),
            _ => Err(Error::invalid("t_fpr must be set exactly for FPR-based selection")),
        }
    }
}

fn check_t_fpr(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(alloc::format!("t_fpr {t} outside (0, 1)")));
    }
    Ok(())
}

/// Positions whose target is at most `tau`.
pub fn identify_negatives(targets: &[f64], tau: u32) -> Vec<usize> {
    let tau = tau as f64;
    targets
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t <= tau)
        .map(|(i, _)| i)
        .collect()
}

fn negative_predictions<E: CardinalityEstimator + ?Sized>(
    estimator: &E,
    points: &Dataset,
    negatives: &[usize],
    eps: f64,
    tau: u32,
) -> Result<Vec<f64>> {
    if negatives.is_empty() {
        return Err(Error::NoNegatives { eps, tau });
    }
    estimator.predict_rows(points, negatives, eps)
}

/// Mean prediction over the negatives (rows of `points`) at `eps`.
pub fn compute_xdt_mean<E: CardinalityEstimator + ?Sized>(
    estimator: &E,
    points: &Dataset,
    negatives: &[usize],
    eps: f64,
) -> Result<f64> {
    let preds = negative_predictions(estimator, points, negatives, eps, 0)?;
    Ok(preds.iter().sum::<f64>() / preds.len() as f64)
}

/// Smallest order statistic `x_(k)` of `values` such that at most
/// `t_fpr * n` of them lie strictly above it.
pub fn fpr_threshold(values: &[f64], t_fpr: f64) -> Result<f64> {
    check_t_fpr(t_fpr)?;
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let budget = t_fpr * n as f64;
    // k is 1-based; aim for ceil((1 - t_fpr) n) and correct for rounding.
    let mut k = n - (crate::math::floor(budget) as usize).min(n - 1);
    while ((n - k) as f64) > budget && k < n {
        k += 1;
    }
    while k > 1 && ((n - (k - 1)) as f64) <= budget {
        k -= 1;
    }
    Ok(sorted[k - 1])
}

/// FPR-based threshold over the negatives (rows of `points`) at `eps`.
///
/// Ties with the threshold count as negative (strict `>`), so the fraction of
/// negatives predicted positive never exceeds `t_fpr`.
pub fn compute_xdt_fpr<E: CardinalityEstimator + ?Sized>(
    estimator: &E,
    points: &Dataset,
    negatives: &[usize],
    eps: f64,
    t_fpr: f64,
) -> Result<f64> {
    check_t_fpr(t_fpr)?;
    let preds = negative_predictions(estimator, points, negatives, eps, 0)?;
    fpr_threshold(&preds, t_fpr)
}

/// Filter decision for a batch of predictions.
pub fn classify(predictions: &[f64], xdt: f64) -> Vec<bool> {
    predictions.iter().map(|&p| p > xdt).collect()
}

/// Serializable summary of a built filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterDescriptor {
    pub xdt: f64,
    pub tau: u32,
    pub eps: f64,
    pub eps_domain: (f64, f64),
    pub selection: Option<XdtSelection>,
    /// Training points identified as groundtruth negatives.
    pub negatives: usize,
    pub training_points: usize,
    /// Seconds spent obtaining the targets used to identify negatives.
    pub target_time: f64,
    /// Seconds spent predicting the negatives and deriving the threshold.
    pub xdt_time: f64,
}

/// Estimator + decision threshold + neighbor threshold.
#[derive(Clone, Debug)]
pub struct LearnedFilter<E> {
    estimator: E,
    descriptor: FilterDescriptor,
}

impl<E: CardinalityEstimator> LearnedFilter<E> {
    /// Filter with an explicitly chosen threshold.
    pub fn with_xdt(estimator: E, xdt: f64, tau: u32, eps_domain: (f64, f64)) -> Self {
        Self {
            estimator,
            descriptor: FilterDescriptor {
                xdt,
                tau,
                eps: f64::NAN,
                eps_domain,
                selection: None,
                negatives: 0,
                training_points: 0,
                target_time: 0.0,
                xdt_time: 0.0,
            },
        }
    }

    /// Reattaches a stored descriptor to an estimator.
    pub fn from_descriptor(estimator: E, descriptor: FilterDescriptor) -> Self {
        Self { estimator, descriptor }
    }

    pub fn xdt(&self) -> f64 {
        self.descriptor.xdt
    }

    pub fn tau(&self) -> u32 {
        self.descriptor.tau
    }

    pub fn descriptor(&self) -> &FilterDescriptor {
        &self.descriptor
    }

    pub fn estimator(&self) -> &E {
        &self.estimator
    }

    fn clamp_eps(&self, eps: f64) -> f64 {
        let (lo, hi) = self.descriptor.eps_domain;
        if eps < lo || eps > hi {
            log::warn!("eps {eps} outside trained domain [{lo}, {hi}], clamping");
            eps.clamp(lo, hi)
        } else {
            eps
        }
    }

    /// `true` iff the predicted count at `eps` exceeds the XDT.
    pub fn query(&self, q: &[f64], eps: f64) -> Result<bool> {
        let eps = self.clamp_eps(eps);
        Ok(self.estimator.predict(q, eps)? > self.descriptor.xdt)
    }

    /// Decisions for every row of `queries`.
    pub fn query_batch(&self, queries: &Dataset, eps: f64) -> Result<Vec<bool>> {
        let eps = self.clamp_eps(eps);
        Ok(classify(&self.estimator.predict_batch(queries, eps)?, self.descriptor.xdt))
    }
}

/// Derives the XDT for `eps` from the training points of `r` listed in
/// `curves`, then wraps the estimator into a filter.
///
/// Training points are members of `r` and their counts include themselves, so
/// a training point is a groundtruth negative when its count is at most `τ + 1`
/// (no more than τ neighbors besides itself).
#[allow(clippy::too_many_arguments)]
pub fn build_filter<E: CardinalityEstimator>(
    estimator: E,
    r: &Dataset,
    metric: Metric,
    curves: &TrainingCurves,
    eps: f64,
    selection: XdtSelection,
    tau: u32,
    eps_domain: (f64, f64),
    clock: &dyn Clock,
) -> Result<LearnedFilter<E>> {
    selection.validate()?;
    let start = clock.now();
    let targets = training_targets(r, metric, curves, eps, selection.source)?;
    let target_time = clock.since(start);

    let start = clock.now();
    let negatives: Vec<usize> = identify_negatives_self_inclusive(&targets, tau)
        .into_iter()
        .map(|k| curves.points()[k])
        .collect();
    if negatives.is_empty() {
        return Err(Error::NoNegatives { eps, tau });
    }
    let xdt = match selection.method {
        XdtMethod::Mean => compute_xdt_mean(&estimator, r, &negatives, eps)?,
        XdtMethod::Fpr => compute_xdt_fpr(&estimator, r, &negatives, eps, selection.t_fpr.unwrap_or(DEFAULT_T_FPR))?,
    };
    let xdt_time = clock.since(start);
    log::info!(
        "xdt {xdt:.4} at eps {eps} (tau {tau}, {} negatives of {}, targets {target_time:.4}s)",
        negatives.len(),
        curves.len()
    );
    Ok(LearnedFilter {
        estimator,
        descriptor: FilterDescriptor {
            xdt,
            tau,
            eps,
            eps_domain,
            selection: Some(selection),
            negatives: negatives.len(),
            training_points: curves.len(),
            target_time,
            xdt_time,
        },
    })
}

/// Negatives among self-inclusive counts: at most `tau` neighbors besides the point.
pub fn identify_negatives_self_inclusive(targets: &[f64], tau: u32) -> Vec<usize> {
    identify_negatives(targets, tau.saturating_add(1))
}

/// Targets of the training points at `eps`, in `curves.points()` order.
pub fn training_targets(
    r: &Dataset,
    metric: Metric,
    curves: &TrainingCurves,
    eps: f64,
    source: NegativesSource,
) -> Result<Vec<f64>> {
    match source {
        NegativesSource::Interpolated => approx_targets_for_eps(curves, eps),
        NegativesSource::Exact => curves
            .points()
            .iter()
            .map(|&p| {
                if p >= r.len() {
                    return Err(Error::ShapeMismatch(alloc::format!("training point {p} outside R")));
                }
                oracle::range_count(r, r.get(p), eps, metric).map(|c| c as f64)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NoClock;
    use crate::estimator::{ConstantEstimator, OracleEstimator};
    use crate::synth::synth_gaussian_mixture;
    use alloc::vec;

    #[test]
    fn negatives_by_definition() {
        assert_eq!(identify_negatives(&[0.0, 1.0, 0.0, 5.0], 0), vec![0, 2]);
        assert_eq!(identify_negatives(&[50.0, 51.0], 50), vec![0]);
        assert!(identify_negatives(&[0.4], 0).is_empty());
        assert_eq!(identify_negatives(&[0.0, 0.4], 0), vec![0]);
    }

    #[test]
    fn real_valued_targets_compare_against_tau() {
        // An interpolated 0.4 is not <= 0, but 0.4 <= 1.
        assert_eq!(identify_negatives(&[0.4], 1), vec![0]);
    }

    #[test]
    fn constant_predictor_gives_constant_xdt() {
        let pts = synth_gaussian_mixture(10, 3, 1, 0.1, 1).unwrap();
        let est = ConstantEstimator { dim: 3, value: 4.5 };
        let rows: Vec<usize> = (0..10).collect();
        assert_eq!(compute_xdt_mean(&est, &pts, &rows, 0.5).unwrap(), 4.5);
        assert_eq!(compute_xdt_fpr(&est, &pts, &rows, 0.5, 0.05).unwrap(), 4.5);
        assert!(matches!(compute_xdt_mean(&est, &pts, &[], 0.5), Err(Error::NoNegatives { .. })));
    }

    #[test]
    fn fpr_order_statistic_on_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let xdt = fpr_threshold(&values, 0.05).unwrap();
        assert_eq!(xdt, 95.0);
        assert_eq!(values.iter().filter(|&&v| v > xdt).count(), 5);
        assert_eq!(fpr_threshold(&[3.0; 17], 0.05).unwrap(), 3.0);
        assert!(fpr_threshold(&values, 1.0).is_err());
    }

    #[test]
    fn oracle_xdt_is_zero_on_empty_neighborhoods() {
        let r = synth_gaussian_mixture(50, 8, 1, 0.05, 2).unwrap();
        // Antipodal probes have no neighbors at small eps.
        let far: Vec<Vec<f64>> = r.iter().take(20).map(|v| v.iter().map(|x| -x).collect()).collect();
        let probes = Dataset::from_rows("far", Metric::Cosine, far).unwrap();
        let est = OracleEstimator::new(&r, Metric::Cosine);
        let counts = est.predict_batch(&probes, 0.3).unwrap();
        let neg = identify_negatives(&counts, 0);
        assert_eq!(neg.len(), 20);
        assert_eq!(compute_xdt_mean(&est, &probes, &neg, 0.3).unwrap(), 0.0);
        let xdt = compute_xdt_fpr(&est, &probes, &neg, 0.3, 0.05).unwrap();
        assert_eq!(xdt, 0.0);
        let fp = classify(&est.predict_rows(&probes, &neg, 0.3).unwrap(), xdt);
        assert!(fp.iter().all(|p| !p));
    }

    #[test]
    fn fixed_threshold_filter_decisions() {
        let r = Dataset::from_rows("r", Metric::Euclidean, [[0.0, 0.0], [5.0, 5.0]]).unwrap();
        let f = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Euclidean), 0.0, 0, (0.0, 10.0));
        assert!(f.query(&[0.1, 0.0], 0.5).unwrap());
        assert!(!f.query(&[2.0, 2.0], 0.5).unwrap());
        let pass = LearnedFilter::with_xdt(ConstantEstimator { dim: 2, value: -1.0 }, -0.5, 0, (0.0, 1.0));
        assert!(pass.query(&[9.0, 9.0], 0.5).unwrap());
        assert!(f.query(&[0.0], 0.5).is_err());
    }

    #[test]
    fn selection_validation() {
        assert!(XdtSelection::fpr(0.0, NegativesSource::Exact).is_err());
        let bad = XdtSelection { method: XdtMethod::Mean, t_fpr: Some(0.1), source: NegativesSource::Exact };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn out_of_domain_eps_is_clamped() {
        let r = Dataset::from_rows("r", Metric::Euclidean, [[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let f = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Euclidean), 1.0, 0, (0.0, 0.5));
        // At eps 5 both points would count; clamped to 0.5 only one does.
        assert!(!f.query(&[0.0, 0.0], 5.0).unwrap());
    }

    #[test]
    fn build_uses_self_inclusive_negatives() {
        let r = synth_gaussian_mixture(60, 8, 2, 0.3, 4).unwrap();
        let grid = crate::sampling::EpsilonGrid::default_for(Metric::Cosine);
        let table = oracle::cardinality_grid(&r, &r, &grid.values, Metric::Cosine).unwrap();
        let set = crate::sampling::prepare_training_set(&r, &table, crate::Strategy::Uniform, 6, 0).unwrap();
        let curves = set.curves();
        let eps = grid.values[0];
        let est = OracleEstimator::new(&r, Metric::Cosine);
        let sel = XdtSelection::mean(NegativesSource::Exact);
        let f = build_filter(est, &r, Metric::Cosine, &curves, eps, sel, 0, (0.4, 0.9), &NoClock);
        let counts = training_targets(&r, Metric::Cosine, &curves, eps, NegativesSource::Exact).unwrap();
        let isolated = counts.iter().filter(|&&c| c <= 1.0).count();
        match f {
            Ok(f) => {
                assert_eq!(f.descriptor().negatives, isolated);
                assert_eq!(f.xdt(), 1.0);
            }
            Err(e) => assert_eq!((isolated, e), (0, Error::NoNegatives { eps, tau: 0 })),
        }
    }
}
