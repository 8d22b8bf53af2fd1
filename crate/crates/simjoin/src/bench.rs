//! Experiment orchestration: end-to-end runs, trade-off sweeps and the
//! generalization protocol.
//!
//! A run prepares one workload (R, S, and when a learned engine is present
//! the cardinality table, prepared training set and model), computes the
//! nested-loop groundtruth for every ε and then times each engine against it.
//! Dataset loading and model training are excluded from engine timings; filter
//! and index construction is reported separately as `build_time`.

use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use simjoin_core::clock::Clock;
use simjoin_core::dataset::split_train_test;
use simjoin_core::estimator::{CardinalityEstimator, OracleEstimator};
use simjoin_core::filter::{build_filter, LearnedFilter, XdtMethod};
use simjoin_core::join::{filtered_join, naive_join, BruteForce, LshSearcher, QueryFilter};
use simjoin_core::lsbf::{lsbf_build, LsbfParams};
use simjoin_core::lsh::{lsh_build, LshParams};
use simjoin_core::metrics::{filter_confusion, portion_at_most, ConfusionCounts, JoinMetrics};
use simjoin_core::oracle::cardinality_grid;
use simjoin_core::rng::{self, Purpose};
use simjoin_core::sampling::{prepare_training_set, TrainingCurves};
use simjoin_core::synth::GaussianMixture;
use simjoin_core::{
    Dataset, EpsilonGrid, JoinResult, Metric, MlpModel, NegativesSource, SplitSpec, Strategy, TrainConfig,
    XdtSelection,
};

use crate::error::{Error, Result, Stage};
use crate::formats::model::load_model;
use crate::formats::vectors::{read_vectors, VectorFormat};
use crate::formats::{read_json, write_json};

pub const REPORT_VERSION: u32 = 1;

fn one() -> u32 {
    1
}

fn default_threads() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default = "SyntheticSpec::default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Seed of the cluster centers (the generator).
    #[serde(default)]
    pub centers_seed: u64,
    /// Seed of the drawn sample.
    #[serde(default = "SyntheticSpec::default_sample_seed")]
    pub sample_seed: u64,
}

impl SyntheticSpec {
    fn default_spread() -> f64 {
        0.1
    }

    fn default_sample_seed() -> u64 {
        1
    }

    pub fn mixture(&self) -> simjoin_core::Result<GaussianMixture> {
        let mut gm = GaussianMixture::new(self.d, self.k, self.spread, self.centers_seed)?;
        if let Some(w) = &self.weights {
            gm = gm.with_weights(w)?;
        }
        gm.with_background(self.background)
    }

    /// Same generator, possibly a different sample.
    pub fn same_generator(&self, other: &SyntheticSpec) -> bool {
        let strip = |s: &SyntheticSpec| SyntheticSpec { sample_seed: 0, n: 0, ..s.clone() };
        strip(self) == strip(other)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<VectorFormat>,
        /// Scale vectors to unit norm after loading.
        #[serde(default)]
        normalize: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub c_min: f64,
    pub c_max: f64,
    #[serde(default = "GridConfig::default_m")]
    pub m: usize,
}

impl GridConfig {
    fn default_m() -> usize {
        100
    }

    pub fn for_metric(metric: Metric) -> Self {
        let g = EpsilonGrid::default_for(metric);
        Self { c_min: g.c_min, c_max: g.c_max, m: g.m() }
    }

    pub fn build(&self) -> simjoin_core::Result<EpsilonGrid> {
        EpsilonGrid::new(self.c_min, self.c_max, self.m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    pub s: usize,
    /// Fraction of R used as training points.
    pub point_fraction: f64,
    /// Use a stored model instead of training one.
    pub model: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Atcs, s: 6, point_fraction: 1.0, model: None, train: TrainConfig::default() }
    }
}

fn default_tau_xjoin() -> u32 {
    50
}

fn default_t_fpr() -> f64 {
    0.05
}

fn fpr_method() -> XdtMethod {
    XdtMethod::Fpr
}

fn mean_method() -> XdtMethod {
    XdtMethod::Mean
}

fn interpolated() -> NegativesSource {
    NegativesSource::Interpolated
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LshConfig {
    #[serde(default = "LshConfig::default_k")]
    pub k: usize,
    #[serde(default = "LshConfig::default_l")]
    pub l: usize,
    #[serde(default = "LshConfig::default_w")]
    pub w: f64,
    #[serde(default = "LshConfig::default_n_p")]
    pub n_p: usize,
}

impl LshConfig {
    fn default_k() -> usize {
        18
    }
    fn default_l() -> usize {
        10
    }
    fn default_w() -> f64 {
        2.5
    }
    fn default_n_p() -> usize {
        40
    }
}

impl Default for LshConfig {
    fn default() -> Self {
        Self { k: Self::default_k(), l: Self::default_l(), w: Self::default_w(), n_p: Self::default_n_p() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineSpec {
    Naive,
    Xjoin {
        #[serde(default = "default_tau_xjoin")]
        tau: u32,
        #[serde(default = "fpr_method")]
        method: XdtMethod,
        #[serde(default = "default_t_fpr")]
        t_fpr: f64,
        #[serde(default = "interpolated")]
        source: NegativesSource,
    },
    /// Exact counting filter with XDT = τ.
    XjoinOracle {
        #[serde(default)]
        tau: u32,
    },
    NaiveLsbf {
        #[serde(default = "LshConfig::default_k")]
        k: usize,
        #[serde(default = "LshConfig::default_l")]
        l: usize,
        #[serde(default = "LshConfig::default_w")]
        w: f64,
        #[serde(default)]
        m_bits: Option<usize>,
    },
    Lsh(LshConfig),
    LshFiltered {
        #[serde(flatten)]
        lsh: LshConfig,
        #[serde(default)]
        tau: u32,
        #[serde(default = "mean_method")]
        method: XdtMethod,
        #[serde(default = "default_t_fpr")]
        t_fpr: f64,
        #[serde(default = "interpolated")]
        source: NegativesSource,
    },
}

impl EngineSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EngineSpec::Naive => "naive",
            EngineSpec::Xjoin { .. } => "xjoin",
            EngineSpec::XjoinOracle { .. } => "xjoin-oracle",
            EngineSpec::NaiveLsbf { .. } => "naive-lsbf",
            EngineSpec::Lsh(_) => "lsh",
            EngineSpec::LshFiltered { .. } => "lsh-filtered",
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, EngineSpec::Xjoin { .. } | EngineSpec::LshFiltered { .. })
    }

    /// Neighbor threshold used for the confusion counts.
    pub fn tau(&self) -> Option<u32> {
        match self {
            EngineSpec::Xjoin { tau, .. } | EngineSpec::XjoinOracle { tau } | EngineSpec::LshFiltered { tau, .. } => {
                Some(*tau)
            }
            EngineSpec::NaiveLsbf { .. } => Some(0),
            EngineSpec::Naive | EngineSpec::Lsh(_) => None,
        }
    }

    fn selection(method: XdtMethod, t_fpr: f64, source: NegativesSource) -> simjoin_core::Result<XdtSelection> {
        match method {
            XdtMethod::Fpr => XdtSelection::fpr(t_fpr, source),
            XdtMethod::Mean => Ok(XdtSelection::mean(source)),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("engine {}: {m}", self.name())));
        match self {
            EngineSpec::Xjoin { method, t_fpr, .. } | EngineSpec::LshFiltered { method, t_fpr, .. } => {
                if *method == XdtMethod::Fpr && !(*t_fpr > 0.0 && *t_fpr < 1.0) {
                    return bad(format!("t_fpr {t_fpr} outside (0, 1)"));
                }
            }
            EngineSpec::NaiveLsbf { k, l, w, m_bits } => {
                if *k == 0 || *l == 0 || !(*w > 0.0) || *m_bits == Some(0) {
                    return bad("k, l, w and m_bits must be positive".into());
                }
            }
            _ => {}
        }
        if let EngineSpec::Lsh(c) | EngineSpec::LshFiltered { lsh: c, .. } = self {
            if c.k == 0 || c.l == 0 || c.n_p == 0 || !(c.w > 0.0) {
                return bad("k, l, n_p and w must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XjoinKnob {
    pub method: XdtMethod,
    pub tau: u32,
}

/// Knob settings for [`tradeoff_sweep`]; empty lists are skipped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub xjoin: Vec<XjoinKnob>,
    pub xjoin_oracle_tau: Vec<u32>,
    pub lsh_n_p: Vec<usize>,
    /// `(w, m_bits)` pairs for the LSBF filter.
    pub lsbf: Vec<(f64, usize)>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.xjoin.len() + self.xjoin_oracle_tau.len() + self.lsh_n_p.len() + self.lsbf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationSpec {
    /// Sample seed of the second (R, S) draw.
    pub second_sample_seed: u64,
    /// Centers seed of the second draw; defaults to the first generator's.
    #[serde(default)]
    pub second_centers_seed: Option<u64>,
    #[serde(default = "GeneralizationSpec::default_engine")]
    pub engine: EngineSpec,
}

impl GeneralizationSpec {
    fn default_engine() -> EngineSpec {
        EngineSpec::Xjoin { tau: 50, method: XdtMethod::Fpr, t_fpr: 0.05, source: NegativesSource::Interpolated }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "one")]
    pub version: u32,
    pub dataset: DatasetSpec,
    #[serde(default = "ExperimentConfig::default_metric")]
    pub metric: Metric,
    #[serde(default)]
    pub split: SplitConfig,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    pub engines: Vec<EngineSpec>,
    /// Seeds training-point selection, ATCS streams and hash families.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub generalization: Option<GeneralizationSpec>,
}

impl ExperimentConfig {
    fn default_metric() -> Metric {
        Metric::Cosine
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> GridConfig {
        self.grid.unwrap_or_else(|| GridConfig::for_metric(self.metric))
    }

    /// Schema checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.version != 1 {
            return bad("unsupported config version");
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("eps must be a non-empty list of finite values >= 0");
        }
        if self.engines.is_empty() {
            return bad("engines must not be empty");
        }
        for e in &self.engines {
            e.validate()?;
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad("split.train_fraction must lie in (0, 1)");
        }
        self.grid().build().map_err(|e| Error::Config(format!("grid: {e}")))?;
        let t = &self.training;
        if t.s < 2 || t.s > self.grid().m {
            return bad("training.s must lie in [2, grid.m]");
        }
        if !(t.point_fraction > 0.0 && t.point_fraction <= 1.0) {
            return bad("training.point_fraction must lie in (0, 1]");
        }
        t.train.validate().map_err(|e| Error::Config(format!("training.train: {e}")))?;
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            if s.n < 2 || s.d == 0 || s.k == 0 {
                return bad("synthetic dataset needs n >= 2, d >= 1, k >= 1");
            }
        }
        Ok(())
    }
}

/// Loads or generates the dataset of a spec.
pub fn load_dataset(spec: &DatasetSpec, metric: Metric) -> Result<Dataset> {
    let ds = match spec {
        DatasetSpec::Synthetic(s) => {
            let gm = s.mixture().stage("dataset")?;
            gm.sample(s.n, s.sample_seed).stage("dataset")?.dataset.with_metric(metric)
        }
        DatasetSpec::File { path, format, normalize } => {
            let ds = read_vectors(path, *format, metric)?;
            if *normalize {
                simjoin_core::dataset::normalize_unit(&ds).stage("dataset")?
            } else {
                ds
            }
        }
    };
    if metric == Metric::Cosine {
        ds.require_unit_norm().stage("dataset")?;
    }
    Ok(ds)
}

/// Sorted row indices of R used as training points.
pub fn training_points(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let take = ((n as f64 * fraction).round() as usize).clamp(1, n);
    if take == n {
        return (0..n).collect();
    }
    let mut rng = rng::seeded(seed, Purpose::TrainingSelection);
    let mut v = index::sample(&mut rng, n, take).into_vec();
    v.sort_unstable();
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub points: usize,
    pub tuples: usize,
    pub strategy: Strategy,
    pub top_up_fraction: f64,
    pub table_time: f64,
    pub wall_time: f64,
    pub final_mae: f64,
    pub final_mse: f64,
    pub loaded_from: Option<PathBuf>,
}

/// Everything the engines need, built once per run.
pub struct Workload {
    pub r: Dataset,
    pub s: Dataset,
    pub metric: Metric,
    pub grid: EpsilonGrid,
    pub model: Option<MlpModel>,
    pub curves: Option<TrainingCurves>,
    pub training: Option<TrainingSummary>,
}

impl Workload {
    /// Splits `data`, and trains (or loads) the model when `with_model` is set.
    pub fn prepare(config: &ExperimentConfig, data: &Dataset, with_model: bool, clock: &dyn Clock) -> Result<Self> {
        let split = SplitSpec::new(config.split.train_fraction, config.split.seed).stage("split")?;
        let (r, s) = split_train_test(data, &split).stage("split")?;
        Self::from_parts(config, r, s, with_model, clock)
    }

    pub fn from_parts(config: &ExperimentConfig, r: Dataset, s: Dataset, with_model: bool, clock: &dyn Clock) -> Result<Self> {
        let grid = config.grid().build().stage("grid")?;
        let mut w = Workload { r, s, metric: config.metric, grid, model: None, curves: None, training: None };
        if with_model {
            w.train(config, clock)?;
        }
        Ok(w)
    }

    fn train(&mut self, config: &ExperimentConfig, clock: &dyn Clock) -> Result<()> {
        let t = &config.training;
        let points = training_points(self.r.len(), t.point_fraction, config.seed);
        let start = clock.now();
        let probes = self.r.subset(&points, "training-points").stage("groundtruth")?;
        let table = cardinality_grid(&self.r, &probes, &self.grid.values, self.metric)
            .and_then(|tb| tb.with_points(points.clone()))
            .stage("groundtruth")?;
        let table_time = clock.since(start);
        let set = prepare_training_set(&self.r, &table, t.strategy, t.s, config.seed).stage("prepare")?;
        let (model, summary) = match &t.model {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found")));
                }
                let model = load_model(path)?;
                if model.dim() != self.r.dim() {
                    return Err(Error::Core {
                        stage: "model",
                        source: simjoin_core::Error::DimensionMismatch { expected: self.r.dim(), found: model.dim() },
                    });
                }
                let (mae, mse) = simjoin_core::mlp::evaluate(&model, &self.r, &set.tuples).stage("model")?;
                (model, (0.0, mae, mse, Some(path.clone())))
            }
            None => {
                let (model, rep) = simjoin_core::mlp::fit(&set.tuples, &self.r, &t.train, clock).stage("train")?;
                (model, (rep.wall_time, rep.final_mae, rep.final_mse, None))
            }
        };
        log::info!("training set: {} points, {} tuples, table {table_time:.3}s", points.len(), set.len());
        self.training = Some(TrainingSummary {
            points: points.len(),
            tuples: set.len(),
            strategy: set.strategy,
            top_up_fraction: set.top_up_fraction(),
            table_time,
            wall_time: summary.0,
            final_mae: summary.1,
            final_mse: summary.2,
            loaded_from: summary.3,
        });
        self.curves = Some(set.curves());
        self.model = Some(model);
        Ok(())
    }

    fn eps_domain(&self) -> (f64, f64) {
        (self.grid.c_min, self.grid.c_max)
    }

    fn learned(&self) -> Result<(&MlpModel, &TrainingCurves)> {
        match (&self.model, &self.curves) {
            (Some(m), Some(c)) => Ok((m, c)),
            _ => Err(Error::Config("engine needs a trained model".into())),
        }
    }

    /// Learned filter for `eps`, built from this workload's model and curves.
    pub fn learned_filter(
        &self,
        eps: f64,
        method: XdtMethod,
        t_fpr: f64,
        source: NegativesSource,
        tau: u32,
        clock: &dyn Clock,
    ) -> Result<LearnedFilter<&MlpModel>> {
        let (model, curves) = self.learned()?;
        let sel = EngineSpec::selection(method, t_fpr, source).stage("filter")?;
        build_filter(model, &self.r, self.metric, curves, eps, sel, tau, self.eps_domain(), clock).stage("filter")
    }
}

/// One engine at one ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineRow {
    pub engine: String,
    pub eps: f64,
    pub params: serde_json::Value,
    pub recall: f64,
    pub total_time: f64,
    pub filter_time: f64,
    pub search_time: f64,
    pub build_time: f64,
    pub speedup: f64,
    pub nbrs: u64,
    pub ppq: u64,
    pub anpq: Option<f64>,
    pub skipped: u64,
    pub queries: u64,
    pub tau: Option<u32>,
    pub xdt: Option<f64>,
    pub confusion: Option<ConfusionCounts>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSummary {
    pub eps: f64,
    pub naive_time: f64,
    pub groundtruth_pairs: u64,
    /// Fraction of S with no neighbor in R.
    pub negative_portion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub metric: Metric,
    pub dim: usize,
    pub r: usize,
    pub s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub threads: usize,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub training: Option<TrainingSummary>,
    pub eps: Vec<EpsSummary>,
    pub rows: Vec<EngineRow>,
}

impl Report {
    /// Every row satisfies `anpq * ppq == nbrs` and confusion totals equal |S|.
    pub fn bookkeeping_holds(&self) -> bool {
        self.rows.iter().all(|row| {
            let m = JoinMetrics { recall: row.recall, total_time: row.total_time, nbrs: row.nbrs, ppq: row.ppq, anpq: row.anpq };
            m.bookkeeping_holds() && row.confusion.is_none_or(|c| c.total() == row.queries)
        })
    }
}

struct Built<'w> {
    filter: Box<dyn QueryFilter + 'w>,
    xdt: Option<f64>,
}

fn params_json(engine: &EngineSpec) -> serde_json::Value {
    let mut v = serde_json::to_value(engine).unwrap_or(serde_json::Value::Null);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("engine");
    }
    v
}

/// Runs one engine at `eps` and scores it against `groundtruth`.
pub fn run_engine(
    w: &Workload,
    engine: &EngineSpec,
    eps: f64,
    groundtruth: &JoinResult,
    seed: u64,
    clock: &dyn Clock,
) -> Result<EngineRow> {
    let start = clock.now();
    let brute = BruteForce { r: &w.r, metric: w.metric };
    let (result, build_time, xdt) = match engine {
        EngineSpec::Naive => (groundtruth.clone(), 0.0, None),
        EngineSpec::Lsh(c) => {
            let index = lsh_build(&w.r, LshParams { k: c.k, l: c.l, w: c.w, seed }).stage("lsh")?;
            let build = clock.since(start);
            let base = LshSearcher { index: &index, n_p: c.n_p, metric: w.metric };
            let res = filtered_join(&simjoin_core::join::AllPass, &base, &w.s, eps, clock).stage("join")?;
            (res, build, None)
        }
        EngineSpec::LshFiltered { lsh: c, tau, method, t_fpr, source } => {
            let filter = w.learned_filter(eps, *method, *t_fpr, *source, *tau, clock)?;
            let index = lsh_build(&w.r, LshParams { k: c.k, l: c.l, w: c.w, seed }).stage("lsh")?;
            let build = clock.since(start);
            let base = LshSearcher { index: &index, n_p: c.n_p, metric: w.metric };
            let xdt = filter.xdt();
            (filtered_join(&filter, &base, &w.s, eps, clock).stage("join")?, build, Some(xdt))
        }
        _ => {
            let built = build_brute_filter(w, engine, eps, seed, clock)?;
            let build = clock.since(start);
            (filtered_join(built.filter.as_ref(), &brute, &w.s, eps, clock).stage("join")?, build, built.xdt)
        }
    };
    Ok(score(engine, eps, &result, groundtruth, build_time, xdt))
}

fn build_brute_filter<'w>(
    w: &'w Workload,
    engine: &EngineSpec,
    eps: f64,
    seed: u64,
    clock: &dyn Clock,
) -> Result<Built<'w>> {
    Ok(match engine {
        EngineSpec::Xjoin { tau, method, t_fpr, source } => {
            let f = w.learned_filter(eps, *method, *t_fpr, *source, *tau, clock)?;
            let xdt = Some(f.xdt());
            Built { filter: Box::new(f), xdt }
        }
        EngineSpec::XjoinOracle { tau } => {
            let est = OracleEstimator::new(&w.r, w.metric);
            let f = LearnedFilter::with_xdt(est, *tau as f64, *tau, (0.0, f64::INFINITY));
            Built { filter: Box::new(f), xdt: Some(*tau as f64) }
        }
        EngineSpec::NaiveLsbf { k, l, w: width, m_bits } => {
            let m_bits = m_bits.unwrap_or_else(|| LsbfParams::default_bits(w.r.len(), *k));
            let f = lsbf_build(&w.r, LsbfParams { k: *k, l: *l, w: *width, m_bits, seed }).stage("lsbf")?;
            Built { filter: Box::new(f), xdt: None }
        }
        other => unreachable!("{} has no brute-force filter", other.name()),
    })
}

fn score(
    engine: &EngineSpec,
    eps: f64,
    result: &JoinResult,
    groundtruth: &JoinResult,
    build_time: f64,
    xdt: Option<f64>,
) -> EngineRow {
    let m = JoinMetrics::new(result, groundtruth);
    let tau = engine.tau();
    let confusion = tau.map(|t| filter_confusion(&result.admitted, &groundtruth.counts, t).expect("equal lengths"));
    EngineRow {
        engine: engine.name().to_string(),
        eps,
        params: params_json(engine),
        recall: m.recall,
        total_time: result.total_time,
        filter_time: result.filter_time,
        search_time: result.search_time,
        build_time,
        speedup: if result.total_time > 0.0 { groundtruth.total_time / result.total_time } else { f64::INFINITY },
        nbrs: m.nbrs,
        ppq: m.ppq,
        anpq: m.anpq,
        skipped: result.skipped() as u64,
        queries: result.admitted.len() as u64,
        tau,
        xdt,
        confusion,
        fpr: confusion.and_then(|c| c.fpr()),
        fnr: confusion.and_then(|c| c.fnr()),
    }
}

fn dataset_summary(w: &Workload, name: &str) -> DatasetSummary {
    DatasetSummary { name: name.to_string(), metric: w.metric, dim: w.r.dim(), r: w.r.len(), s: w.s.len() }
}

fn groundtruth(w: &Workload, eps: f64, clock: &dyn Clock) -> Result<(JoinResult, EpsSummary)> {
    let gt = naive_join(&w.r, &w.s, eps, w.metric, clock).stage("groundtruth")?;
    let summary = EpsSummary {
        eps,
        naive_time: gt.total_time,
        groundtruth_pairs: gt.len() as u64,
        negative_portion: portion_at_most(&gt.counts, 0),
    };
    Ok((gt, summary))
}

/// Runs every engine at every ε of the config.
pub fn run_experiment(config: &ExperimentConfig, clock: &dyn Clock) -> Result<Report> {
    config.validate()?;
    log::info!("experiment config: {}", serde_json::to_string(config).unwrap_or_default());
    let data = load_dataset(&config.dataset, config.metric)?;
    let needs_model = config.engines.iter().any(EngineSpec::needs_model);
    let w = Workload::prepare(config, &data, needs_model, clock)?;
    run_on_workload(config, &w, data.name(), clock)
}

pub fn run_on_workload(config: &ExperimentConfig, w: &Workload, name: &str, clock: &dyn Clock) -> Result<Report> {
    let mut rows = Vec::new();
    let mut eps_rows = Vec::new();
    for &eps in &config.eps {
        let (gt, summary) = groundtruth(w, eps, clock)?;
        log::info!("eps {eps}: naive {:.3}s, {} pairs, negative portion {:.3}", gt.total_time, gt.len(), summary.negative_portion);
        eps_rows.push(summary);
        for engine in &config.engines {
            let row = run_engine(w, engine, eps, &gt, config.seed, clock)?;
            log::info!(
                "eps {eps} {}: recall {:.4}, {:.3}s, speedup {:.2}",
                row.engine,
                row.recall,
                row.total_time,
                row.speedup
            );
            rows.push(row);
        }
    }
    Ok(Report {
        version: REPORT_VERSION,
        threads: config.threads,
        config: config.clone(),
        dataset: dataset_summary(w, name),
        training: w.training.clone(),
        eps: eps_rows,
        rows,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

pub const END2END_COLUMNS: [&str; 13] = [
    "engine", "eps", "recall", "total_time", "filter_time", "search_time", "build_time", "speedup", "nbrs", "ppq",
    "anpq", "skipped", "threads",
];

pub const CONFUSION_COLUMNS: [&str; 10] = ["engine", "eps", "tau", "xdt", "tp", "fp", "tn", "fn", "fpr", "fnr"];

/// Writes `report.json`, `end2end.csv` and `confusion.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("report.json"), report)?;
    let path = dir.join("end2end.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(END2END_COLUMNS).map_err(csv_err(&path))?;
    for r in &report.rows {
        w.write_record([
            r.engine.clone(),
            r.eps.to_string(),
            r.recall.to_string(),
            r.total_time.to_string(),
            r.filter_time.to_string(),
            r.search_time.to_string(),
            r.build_time.to_string(),
            r.speedup.to_string(),
            r.nbrs.to_string(),
            r.ppq.to_string(),
            opt(r.anpq),
            r.skipped.to_string(),
            report.threads.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("confusion.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(CONFUSION_COLUMNS).map_err(csv_err(&path))?;
    for r in &report.rows {
        if let (Some(c), Some(tau)) = (r.confusion, r.tau) {
            w.write_record([
                r.engine.clone(),
                r.eps.to_string(),
                tau.to_string(),
                opt(r.xdt),
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
                opt(c.fpr()),
                opt(c.fnr()),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn load_report(path: &Path) -> Result<Report> {
    let report: Report = read_json(path)?;
    if report.version != REPORT_VERSION {
        return Err(Error::format(path, format!("unsupported report version {}", report.version)));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub engine: String,
    pub knob: String,
    pub value: String,
    pub eps: f64,
    pub total_time: f64,
    pub recall: f64,
}

pub const TRADEOFF_COLUMNS: [&str; 6] = ["engine", "knob", "value", "eps", "total_time", "recall"];

fn base_lsh(config: &ExperimentConfig) -> LshConfig {
    config
        .engines
        .iter()
        .find_map(|e| match e {
            EngineSpec::Lsh(c) | EngineSpec::LshFiltered { lsh: c, .. } => Some(*c),
            _ => None,
        })
        .unwrap_or_default()
}

/// One (time, recall) point per knob setting and ε.
pub fn tradeoff_sweep(config: &ExperimentConfig, grid: &SweepGrid, clock: &dyn Clock) -> Result<Vec<TradeoffPoint>> {
    config.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let data = load_dataset(&config.dataset, config.metric)?;
    let w = Workload::prepare(config, &data, !grid.xjoin.is_empty(), clock)?;
    let lsh = base_lsh(config);
    let lsbf_base = config.engines.iter().find_map(|e| match e {
        EngineSpec::NaiveLsbf { k, l, .. } => Some((*k, *l)),
        _ => None,
    });
    let (lsbf_k, lsbf_l) = lsbf_base.unwrap_or((LshConfig::default_k(), LshConfig::default_l()));
    let mut settings: Vec<(String, String, EngineSpec)> = Vec::new();
    for knob in &grid.xjoin {
        let method = if knob.method == XdtMethod::Fpr { "fpr" } else { "mean" };
        let engine = EngineSpec::Xjoin { tau: knob.tau, method: knob.method, t_fpr: 0.05, source: NegativesSource::Interpolated };
        settings.push(("method,tau".into(), format!("{method},{}", knob.tau), engine));
    }
    for &tau in &grid.xjoin_oracle_tau {
        settings.push(("tau".into(), tau.to_string(), EngineSpec::XjoinOracle { tau }));
    }
    for &n_p in &grid.lsh_n_p {
        settings.push(("n_p".into(), n_p.to_string(), EngineSpec::Lsh(LshConfig { n_p, ..lsh })));
    }
    for &(width, m_bits) in &grid.lsbf {
        let engine = EngineSpec::NaiveLsbf { k: lsbf_k, l: lsbf_l, w: width, m_bits: Some(m_bits) };
        settings.push(("w,m_bits".into(), format!("{width},{m_bits}"), engine));
    }
    let mut out = Vec::new();
    for &eps in &config.eps {
        let (gt, _) = groundtruth(&w, eps, clock)?;
        for (knob, value, engine) in &settings {
            engine.validate()?;
            let row = run_engine(&w, engine, eps, &gt, config.seed, clock)?;
            out.push(TradeoffPoint {
                engine: row.engine,
                knob: knob.clone(),
                value: value.clone(),
                eps,
                total_time: row.total_time,
                recall: row.recall,
            });
        }
    }
    Ok(out)
}

pub fn write_tradeoff(path: &Path, points: &[TradeoffPoint]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(TRADEOFF_COLUMNS).map_err(csv_err(path))?;
    for p in points {
        w.write_record([
            p.engine.clone(),
            p.knob.clone(),
            p.value.clone(),
            p.eps.to_string(),
            p.total_time.to_string(),
            p.recall.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tradeoff(path: &Path) -> Result<Vec<TradeoffPoint>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rd.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(TRADEOFF_COLUMNS) {
        return Err(Error::format(path, format!("unexpected tradeoff columns {header:?}")));
    }
    rd.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRun {
    pub split: String,
    pub speedup: f64,
    pub recall: f64,
    pub recall_loss: f64,
    pub total_time: f64,
    pub naive_time: f64,
    pub negative_portion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub eps: f64,
    pub engine: String,
    pub first: GeneralizationRun,
    pub second: GeneralizationRun,
    /// `second.recall - first.recall`.
    pub recall_delta: f64,
    /// `second.speedup / first.speedup`.
    pub speedup_ratio: f64,
    pub out_of_distribution: bool,
}

/// Trains once on the first draw and evaluates the same filter on a fresh
/// draw, for every ε of the config. The dataset must be synthetic.
pub fn generalization_check(config: &ExperimentConfig, clock: &dyn Clock) -> Result<Vec<GeneralizationReport>> {
    config.validate()?;
    let spec = config
        .generalization
        .as_ref()
        .ok_or_else(|| Error::Config("missing 'generalization' section".into()))?;
    spec.engine.validate()?;
    let DatasetSpec::Synthetic(first_spec) = &config.dataset else {
        return Err(Error::Config("generalization needs a synthetic dataset".into()));
    };
    let mut second_spec = first_spec.clone();
    second_spec.sample_seed = spec.second_sample_seed;
    if let Some(c) = spec.second_centers_seed {
        second_spec.centers_seed = c;
    }
    let ood = !first_spec.same_generator(&second_spec);
    if ood {
        log::warn!("second draw uses a different generator; results are out of distribution");
    }
    let first_data = load_dataset(&config.dataset, config.metric)?;
    let second_data = load_dataset(&DatasetSpec::Synthetic(second_spec), config.metric)?;
    let needs_model = spec.engine.needs_model();
    let first = Workload::prepare(config, &first_data, needs_model, clock)?;
    let split = SplitSpec::new(config.split.train_fraction, config.split.seed).stage("split")?;
    let (r2, s2) = split_train_test(&second_data, &split).stage("split")?;
    let second = Workload::from_parts(config, r2, s2, false, clock)?;

    let mut out = Vec::new();
    for &eps in &config.eps {
        let filter: Box<dyn QueryFilter + '_> = match &spec.engine {
            EngineSpec::Xjoin { tau, method, t_fpr, source } => {
                Box::new(first.learned_filter(eps, *method, *t_fpr, *source, *tau, clock)?)
            }
            EngineSpec::Naive => Box::new(simjoin_core::join::AllPass),
            other => {
                return Err(Error::Config(format!("generalization supports naive and xjoin engines, not {}", other.name())))
            }
        };
        let run = |w: &Workload, label: &str| -> Result<GeneralizationRun> {
            let (gt, summary) = groundtruth(w, eps, clock)?;
            let res = filtered_join(filter.as_ref(), &BruteForce { r: &w.r, metric: w.metric }, &w.s, eps, clock)
                .stage("join")?;
            let recall = simjoin_core::metrics::recall(&res.pairs, &gt.pairs);
            Ok(GeneralizationRun {
                split: label.to_string(),
                speedup: gt.total_time / res.total_time.max(f64::MIN_POSITIVE),
                recall,
                recall_loss: 1.0 - recall,
                total_time: res.total_time,
                naive_time: gt.total_time,
                negative_portion: summary.negative_portion,
            })
        };
        let a = run(&first, "first")?;
        let b = run(&second, "second")?;
        log::info!(
            "eps {eps}: recall {:.4} vs {:.4}, speedup {:.2} vs {:.2}",
            a.recall,
            b.recall,
            a.speedup,
            b.speedup
        );
        out.push(GeneralizationReport {
            eps,
            engine: spec.engine.name().to_string(),
            recall_delta: b.recall - a.recall,
            speedup_ratio: b.speedup / a.speedup,
            first: a,
            second: b,
            out_of_distribution: ood,
        });
    }
    Ok(out)
}

pub const GENERALIZATION_COLUMNS: [&str; 11] = [
    "eps",
    "engine",
    "split",
    "speedup",
    "recall",
    "recall_loss",
    "total_time",
    "naive_time",
    "negative_portion",
    "speedup_ratio",
    "out_of_distribution",
];

pub fn write_generalization(path: &Path, reports: &[GeneralizationReport]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(GENERALIZATION_COLUMNS).map_err(csv_err(path))?;
    for g in reports {
        for run in [&g.first, &g.second] {
            w.write_record([
                g.eps.to_string(),
                g.engine.clone(),
                run.split.clone(),
                run.speedup.to_string(),
                run.recall.to_string(),
                run.recall_loss.to_string(),
                run.total_time.to_string(),
                run.naive_time.to_string(),
                run.negative_portion.to_string(),
                g.speedup_ratio.to_string(),
                g.out_of_distribution.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(engines: Vec<EngineSpec>) -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "dataset": {"synthetic": {"n": 300, "d": 8, "k": 3, "spread": 0.05, "background": 0.5}},
            "eps": [0.3],
            "grid": {"c_min": 0.1, "c_max": 0.5, "m": 20},
            "training": {"point_fraction": 0.5, "train": {"epochs": 3, "hidden": [16, 8]}},
            "engines": engines,
        }))
        .unwrap()
    }

    #[test]
    fn engine_specs_parse_with_defaults() {
        let e: EngineSpec = serde_json::from_str(r#"{"engine": "xjoin"}"#).unwrap();
        assert_eq!(e, GeneralizationSpec::default_engine());
        let e: EngineSpec = serde_json::from_str(r#"{"engine": "lsh-filtered", "n_p": 2}"#).unwrap();
        match e {
            EngineSpec::LshFiltered { lsh, tau, method, .. } => {
                assert_eq!((lsh.k, lsh.l, lsh.n_p, tau, method), (18, 10, 2, 0, XdtMethod::Mean));
            }
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<EngineSpec>(r#"{"engine": "lsh", "bogus": 1}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = tiny(vec![EngineSpec::Naive]);
        c.validate().unwrap();
        c.eps.clear();
        assert!(c.validate().is_err());
        let mut c = tiny(vec![]);
        assert!(c.validate().is_err());
        c.engines.push(EngineSpec::Lsh(LshConfig { n_p: 0, ..Default::default() }));
        assert!(c.validate().is_err());
    }

    #[test]
    fn oracle_engine_is_exact_and_deterministic() {
        let c = tiny(vec![EngineSpec::Naive, EngineSpec::XjoinOracle { tau: 0 }]);
        let clock = simjoin_core::clock::MonotonicClock::new();
        let a = run_experiment(&c, &clock).unwrap();
        let b = run_experiment(&c, &clock).unwrap();
        let oracle = &a.rows[1];
        assert_eq!(oracle.recall, 1.0);
        assert_eq!(oracle.fpr.unwrap_or(0.0), 0.0);
        assert_eq!(oracle.fnr.unwrap_or(0.0), 0.0);
        assert!(a.bookkeeping_holds());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!((x.nbrs, x.ppq), (y.nbrs, y.ppq));
        }
    }

    #[test]
    fn report_round_trips() {
        let c = tiny(vec![EngineSpec::Naive, EngineSpec::Xjoin { tau: 0, method: XdtMethod::Fpr, t_fpr: 0.05, source: NegativesSource::Interpolated }]);
        let clock = simjoin_core::clock::MonotonicClock::new();
        let report = run_experiment(&c, &clock).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &report).unwrap();
        assert_eq!(load_report(&dir.path().join("report.json")).unwrap(), report);
        let csv = std::fs::read_to_string(dir.path().join("end2end.csv")).unwrap();
        assert!(csv.starts_with(&END2END_COLUMNS.join(",")));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn missing_model_names_the_file() {
        let mut c = tiny(vec![EngineSpec::Xjoin { tau: 0, method: XdtMethod::Fpr, t_fpr: 0.05, source: NegativesSource::Interpolated }]);
        c.training.model = Some(PathBuf::from("/nonexistent/model.bin"));
        let err = run_experiment(&c, &simjoin_core::clock::NoClock).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.bin"), "{err}");
    }

    #[test]
    fn same_generator_detection() {
        let a = SyntheticSpec { n: 10, d: 4, k: 2, spread: 0.1, background: 0.0, weights: None, centers_seed: 1, sample_seed: 1 };
        let b = SyntheticSpec { sample_seed: 7, n: 20, ..a.clone() };
        assert!(a.same_generator(&b));
        assert!(!a.same_generator(&SyntheticSpec { centers_seed: 2, ..a.clone() }));
    }

    #[test]
    fn training_point_selection() {
        assert_eq!(training_points(5, 1.0, 0), vec![0, 1, 2, 3, 4]);
        let p = training_points(100, 0.25, 3);
        assert_eq!(p.len(), 25);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p, training_points(100, 0.25, 3));
    }
}
