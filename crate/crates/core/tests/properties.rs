//! Cross-module invariants checked over generated inputs.

use proptest::prelude::*;
use simjoin_core::clock::NoClock;
use simjoin_core::estimator::{CardinalityEstimator, OracleEstimator};
use simjoin_core::filter::{compute_xdt_fpr, compute_xdt_mean, identify_negatives};
use simjoin_core::join::{filtered_join, naive_join, BruteForce, LshSearcher, QueryFilter};
use simjoin_core::lsbf::{lsbf_build, LsbfParams};
use simjoin_core::lsh::{lsh_build, LshParams};
use simjoin_core::metrics::{filter_confusion, recall};
use simjoin_core::oracle::{cardinality_grid, range_count, range_search};
use simjoin_core::sampling::atcs_indices;
use simjoin_core::synth::{synth_gaussian_mixture, GaussianMixture};
use simjoin_core::{distance, Dataset, LearnedFilter, Metric, TrainConfig, TrainingTuple};

fn mixture(n: usize, d: usize, seed: u64) -> Dataset {
    GaussianMixture::new(d, 3, 0.15, seed)
        .and_then(|g| g.with_background(0.4))
        .and_then(|g| g.sample(n, seed.wrapping_add(1)))
        .unwrap()
        .dataset
}

fn rows(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), n)
}

#[test]
fn closed_threshold_includes_the_boundary() {
    let r = Dataset::from_rows("r", Metric::Euclidean, vec![vec![0.0, 0.0], vec![6.0, 8.0]]).unwrap();
    let hit = range_search(&r, &[3.0, 4.0], 5.0, Metric::Euclidean).unwrap();
    assert_eq!(hit.ids, vec![0, 1]);
    assert!(range_search(&r, &[3.0, 4.0], 5.0 - 1e-12, Metric::Euclidean).unwrap().is_empty());
}

#[test]
fn lsbf_has_no_false_negatives_on_inserted_points() {
    let r = mixture(800, 12, 3);
    for (k, l, w) in [(4, 3, 0.5), (10, 8, 2.5), (18, 10, 1.0)] {
        let f = lsbf_build(&r, LsbfParams { k, l, w, m_bits: 4096, seed: 9 }).unwrap();
        assert!(r.iter().all(|v| f.query(v).unwrap()));
    }
}

#[test]
fn training_loss_is_finite_and_falls_early() {
    let r = Dataset::from_rows("line", Metric::Euclidean, (0..64).map(|i| vec![i as f64 / 64.0])).unwrap();
    let tuples: Vec<TrainingTuple> = (0..64)
        .flat_map(|p| (0..4).map(move |j| TrainingTuple { point_index: p, eps: j as f64, target: 3.0 * p as f64 + j as f64 }))
        .collect();
    let config = TrainConfig { epochs: 10, batch_size: 32, learning_rate: 1e-2, hidden: vec![16, 16], ..Default::default() };
    let (_, report) = simjoin_core::mlp::fit(&tuples, &r, &config, &NoClock).unwrap();
    assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(report.epoch_losses[9] < report.epoch_losses[0], "{:?}", report.epoch_losses);
}

#[test]
fn fixed_seeds_give_identical_lsh_joins() {
    let r = mixture(600, 8, 4);
    let s = mixture(200, 8, 5);
    let run = || {
        let idx = lsh_build(&r, LshParams { k: 6, l: 4, w: 1.5, seed: 2 }).unwrap();
        filtered_join(&simjoin_core::join::AllPass, &LshSearcher { index: &idx, n_p: 6, metric: Metric::Cosine }, &s, 0.3, &NoClock)
            .unwrap()
            .pairs
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn table_rows_are_non_decreasing(data in rows(5..40, 4), m in 2usize..20) {
        let r = Dataset::from_rows("r", Metric::Euclidean, data).unwrap();
        let grid: Vec<f64> = (0..m).map(|j| 0.5 + 4.0 * j as f64 / m as f64).collect();
        let t = cardinality_grid(&r, &r, &grid, Metric::Euclidean).unwrap();
        for row in t.rows() {
            prop_assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn range_search_ignores_dataset_order(data in rows(2..40, 3), q in proptest::collection::vec(-3.0f64..3.0, 3),
                                          eps in 0.1f64..4.0, rot in 0usize..40) {
        let n = data.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let r = Dataset::from_rows("r", Metric::Euclidean, data.clone()).unwrap();
        let shuffled = r.subset(&perm, "p").unwrap();
        let a = range_search(&r, &q, eps, Metric::Euclidean).unwrap().ids;
        let mut b: Vec<usize> = range_search(&shuffled, &q, eps, Metric::Euclidean).unwrap().ids.iter().map(|&i| perm[i]).collect();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn oracle_filter_is_exact(seed in 0u64..1000, tau in 0u32..20, eps in 0.05f64..0.6) {
        let r = mixture(300, 6, seed);
        let s = mixture(80, 6, seed + 7);
        let f = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Cosine), tau as f64, tau, (0.0, 2.0));
        let admitted = f.admit(&s, eps).unwrap();
        for (i, q) in s.iter().enumerate() {
            prop_assert_eq!(admitted[i], range_count(&r, q, eps, Metric::Cosine).unwrap() > tau as usize);
        }
        let gt = naive_join(&r, &s, eps, Metric::Cosine, &NoClock).unwrap();
        let c = filter_confusion(&admitted, &gt.counts, tau).unwrap();
        prop_assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn xdt_orders_and_grows_with_tau(seed in 0u64..1000, eps in 0.1f64..0.5) {
        let r = mixture(300, 6, seed);
        let est = OracleEstimator::new(&r, Metric::Cosine);
        let targets = est.predict_batch(&r, eps).unwrap();
        let mut last: Option<(f64, f64)> = None;
        for tau in [1u32, 2, 4, 8, 16, 32, 64] {
            let neg = identify_negatives(&targets, tau);
            if neg.is_empty() {
                continue;
            }
            let mean = compute_xdt_mean(&est, &r, &neg, eps).unwrap();
            let fpr = compute_xdt_fpr(&est, &r, &neg, eps, 0.05).unwrap();
            let mut preds: Vec<f64> = neg.iter().map(|&i| targets[i]).collect();
            preds.sort_by(f64::total_cmp);
            let p95 = preds[((preds.len() as f64 * 0.95).ceil() as usize).min(preds.len()) - 1];
            if mean < p95 {
                prop_assert!(fpr >= mean, "tau {tau}: fpr {fpr} < mean {mean}");
            }
            if let Some((m0, f0)) = last {
                prop_assert!(mean >= m0 && fpr >= f0);
            }
            last = Some((mean, fpr));
        }
    }

    #[test]
    fn every_engine_verifies_its_pairs(seed in 0u64..1000, eps in 0.05f64..0.5, n_p in 1usize..12) {
        let r = mixture(250, 8, seed);
        let s = mixture(60, 8, seed + 3);
        let brute = BruteForce { r: &r, metric: Metric::Cosine };
        let idx = lsh_build(&r, LshParams { k: 6, l: 3, w: 1.0, seed }).unwrap();
        let lsh = LshSearcher { index: &idx, n_p, metric: Metric::Cosine };
        let lsbf = lsbf_build(&r, LsbfParams { k: 6, l: 3, w: 1.0, m_bits: 2048, seed }).unwrap();
        let learned = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Cosine), 0.0, 0, (0.0, 2.0));
        let gt = naive_join(&r, &s, eps, Metric::Cosine, &NoClock).unwrap();
        let lsh_alone = filtered_join(&simjoin_core::join::AllPass, &lsh, &s, eps, &NoClock).unwrap();
        let runs = [
            gt.clone(),
            lsh_alone.clone(),
            filtered_join(&lsbf, &brute, &s, eps, &NoClock).unwrap(),
            filtered_join(&learned, &brute, &s, eps, &NoClock).unwrap(),
            filtered_join(&learned, &lsh, &s, eps, &NoClock).unwrap(),
        ];
        for res in &runs {
            for &(ri, si) in &res.pairs {
                prop_assert!(distance(r.get(ri as usize), s.get(si as usize), Metric::Cosine).unwrap() <= eps);
            }
        }
        // A zero-false-negative filter leaves the base engine's recall untouched.
        prop_assert_eq!(recall(&runs[4].pairs, &gt.pairs), recall(&lsh_alone.pairs, &gt.pairs));
        prop_assert!(recall(&runs[2].pairs, &gt.pairs) <= 1.0);
    }

    #[test]
    fn brute_force_nbrs_are_true_counts_of_admitted(seed in 0u64..1000, eps in 0.05f64..0.5, xdt in 0.0f64..30.0) {
        let r = mixture(250, 8, seed);
        let s = mixture(60, 8, seed + 11);
        let f = LearnedFilter::with_xdt(OracleEstimator::new(&r, Metric::Cosine), xdt, 0, (0.0, 2.0));
        let res = filtered_join(&f, &BruteForce { r: &r, metric: Metric::Cosine }, &s, eps, &NoClock).unwrap();
        let gt = naive_join(&r, &s, eps, Metric::Cosine, &NoClock).unwrap();
        let expected: u64 = res.admitted.iter().zip(&gt.counts).filter(|(a, _)| **a).map(|(_, &c)| c as u64).sum();
        prop_assert_eq!(res.nbrs(), expected);
        prop_assert!(recall(&res.pairs, &gt.pairs) <= 1.0);
    }

    #[test]
    fn atcs_stage_one_never_exceeds_s(row in proptest::collection::vec(0u32..1000, 6..150), s in 1usize..6, seed in any::<u64>()) {
        let targets: Vec<f64> = {
            let mut t: Vec<f64> = row.iter().map(|&x| x as f64).collect();
            t.sort_by(f64::total_cmp);
            t
        };
        let mut rng = simjoin_core::rng::seeded(seed, simjoin_core::rng::Purpose::TrainingSelection);
        let sel = atcs_indices(&targets, s, &mut rng).unwrap();
        prop_assert!(sel.stage_one.iter().sum::<usize>() <= s);
        prop_assert_eq!(sel.indices.len(), s);
    }

    #[test]
    fn naive_join_matches_swapped_join(seed in 0u64..1000, eps in 0.05f64..1.0) {
        let r = synth_gaussian_mixture(40, 5, 2, 0.3, seed).unwrap();
        let s = synth_gaussian_mixture(25, 5, 2, 0.3, seed + 1).unwrap();
        let rs = naive_join(&r, &s, eps, Metric::Cosine, &NoClock).unwrap();
        let mut sr: Vec<(u32, u32)> = naive_join(&s, &r, eps, Metric::Cosine, &NoClock).unwrap()
            .pairs.into_iter().map(|(a, b)| (b, a)).collect();
        sr.sort_by_key(|&(a, b)| (b, a));
        prop_assert_eq!(rs.pairs, sr);
    }
}
