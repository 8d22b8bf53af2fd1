//! Command-line front end.
//!
//! Pipeline subcommands communicate only through files under `--output-dir`:
//!
//! | subcommand     | reads                                   | writes                                  |
//! |----------------|-----------------------------------------|-----------------------------------------|
//! | `ingest`       | `--input`                               | `dataset.fvecs`, `dataset.json`         |
//! | `synth`        |                                         | `dataset.fvecs`, `dataset.json`         |
//! | `groundtruth`  | dataset                                 | `split.json`, `table.bin`, `table.csv`  |
//! | `prepare`      | dataset, split, table                   | `training.csv`, `training.meta.json`    |
//! | `train`        | dataset, split, training set            | `model.bin`, `train_report.json`        |
//! | `build-filter` | dataset, split, table, training, model  | `filter_<engine>_eps<ε>.json`, `lsbf.json` |
//! | `join`         | dataset, split, filter files            | `join_<engine>_eps<ε>.csv` (+ `.json`)  |
//!
//! `bench`, `sweep` and `generalize` take an experiment config via `--config`.
//! For every other subcommand `--config` names a JSON object whose keys are flag
//! names; its values override the flags given on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use simjoin_core::clock::MonotonicClock;
use simjoin_core::dataset::{normalize_unit, split_indices};
use simjoin_core::filter::build_filter;
use simjoin_core::join::{filtered_join, naive_join, BruteForce, LshSearcher};
use simjoin_core::lsbf::{lsbf_build, LsbfParams};
use simjoin_core::lsh::{lsh_build, LshParams};
use simjoin_core::oracle::cardinality_grid;
use simjoin_core::sampling::prepare_training_set;
use simjoin_core::synth::GaussianMixture;
use simjoin_core::{
    Dataset, EpsilonGrid, JoinResult, LearnedFilter, Metric, NegativesSource, OracleEstimator, SplitSpec, Strategy,
    TargetTransform, TrainConfig, XdtMethod, XdtSelection,
};

use crate::bench::{
    generalization_check, run_experiment, training_points, tradeoff_sweep, write_generalization, write_report,
    write_tradeoff, ExperimentConfig,
};
use crate::error::{Error, Result, Stage};
use crate::formats::model::{load_model, save_model};
use crate::formats::results::{load_lsbf, save_join, save_lsbf, FilterFile};
use crate::formats::table::{load_table, load_training_set, save_table, save_table_csv, save_training_set};
use crate::formats::vectors::{read_vectors, write_fvecs, VectorFormat};
use crate::formats::{read_json, write_json};

#[derive(Debug, Parser, Serialize)]
#[command(name = "simjoin", version, about = "Similarity joins with learned metric-space filters", args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for splits, training-point selection, ATCS, weight init and hash families.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Thread cap; engines run single-threaded and the value is recorded.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Directory for every artifact.
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    /// JSON file: experiment config for bench/sweep/generalize, flag overrides otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum StrategyArg {
    Uniform,
    Atcs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum TransformArg {
    Log1p,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MethodArg {
    Fpr,
    Mean,
}

impl From<MethodArg> for XdtMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fpr => XdtMethod::Fpr,
            MethodArg::Mean => XdtMethod::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SourceArg {
    Exact,
    Interpolated,
}

impl From<SourceArg> for NegativesSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Exact => NegativesSource::Exact,
            SourceArg::Interpolated => NegativesSource::Interpolated,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum EngineArg {
    Naive,
    Xjoin,
    XjoinOracle,
    NaiveLsbf,
    Lsh,
    LshFiltered,
}

impl EngineArg {
    fn name(self) -> &'static str {
        match self {
            EngineArg::Naive => "naive",
            EngineArg::Xjoin => "xjoin",
            EngineArg::XjoinOracle => "xjoin-oracle",
            EngineArg::NaiveLsbf => "naive-lsbf",
            EngineArg::Lsh => "lsh",
            EngineArg::LshFiltered => "lsh-filtered",
        }
    }

    /// Per-engine neighbor threshold default.
    fn default_tau(self) -> u32 {
        if self == EngineArg::Xjoin {
            50
        } else {
            0
        }
    }

    /// Per-engine XDT method default.
    fn default_method(self) -> MethodArg {
        if self == EngineArg::LshFiltered {
            MethodArg::Mean
        } else {
            MethodArg::Fpr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FilterEngineArg {
    Xjoin,
    LshFiltered,
    NaiveLsbf,
}

impl From<FilterEngineArg> for EngineArg {
    fn from(e: FilterEngineArg) -> Self {
        match e {
            FilterEngineArg::Xjoin => EngineArg::Xjoin,
            FilterEngineArg::LshFiltered => EngineArg::LshFiltered,
            FilterEngineArg::NaiveLsbf => EngineArg::NaiveLsbf,
        }
    }
}

/// ε grid given as `min:max:count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridArg {
    pub c_min: f64,
    pub c_max: f64,
    pub m: usize,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, m] = parts.as_slice() else {
            return Err(format!("expected min:max:count, got '{s}'"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad number '{x}' in '{s}'"));
        let m = m.trim().parse::<usize>().map_err(|_| format!("bad count '{m}' in '{s}'"))?;
        let g = GridArg { c_min: num(lo)?, c_max: num(hi)?, m };
        g.build().map_err(|e| e.to_string())?;
        Ok(g)
    }
}

impl GridArg {
    fn build(&self) -> simjoin_core::Result<EpsilonGrid> {
        EpsilonGrid::new(self.c_min, self.c_max, self.m)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArg {
    /// Dataset file [default: <output-dir>/dataset.fvecs]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LshArgs {
    /// Hash functions per table (LSH) or per group (LSBF).
    #[arg(long, default_value_t = 18)]
    pub k: usize,
    /// Tables (LSH) or groups (LSBF).
    #[arg(long, default_value_t = 10)]
    pub l: usize,
    /// Bucket width W.
    #[arg(long, default_value_t = 2.5)]
    pub w: f64,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Convert a vector file into the pipeline's dataset.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// fvecs, csv or raw-f32 [default: from extension]
        #[arg(long)]
        format: Option<String>,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
        /// Scale vectors to unit norm.
        #[arg(long)]
        normalize: bool,
    },
    /// Draw a Gaussian-mixture dataset on the unit sphere (centers from --seed).
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        spread: f64,
        /// Fraction of uniform background points.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        /// Seed of the sample [default: --seed]
        #[arg(long)]
        sample_seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
    },
    /// Split into R/S and compute the cardinality table of the training points.
    Groundtruth {
        #[command(flatten)]
        data: DatasetArg,
        /// ε grid min:max:count [default: 0.4:0.9:100 cosine, 0.5:2.0:100 euclidean]
        #[arg(long)]
        eps_grid: Option<GridArg>,
        /// Share of the dataset that becomes R.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Share of R used as training points.
        #[arg(long, default_value_t = 1.0)]
        point_fraction: f64,
    },
    /// Select training conditions from the cardinality table.
    Prepare {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, value_enum, default_value_t = StrategyArg::Atcs)]
        strategy: StrategyArg,
        /// Training conditions per point.
        #[arg(long, default_value_t = 6)]
        s: usize,
    },
    /// Train the cardinality regressor.
    Train {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Hidden layer widths.
        #[arg(long, value_delimiter = ',', default_value = "512,512,256,128")]
        hidden: Vec<usize>,
        #[arg(long, value_enum, default_value_t = TransformArg::Log1p)]
        transform: TransformArg,
    },
    /// Derive a filter's decision threshold (learned) or build the LSBF.
    BuildFilter {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, value_enum, default_value_t = FilterEngineArg::Xjoin)]
        engine: FilterEngineArg,
        /// Query ε (learned filters).
        #[arg(long)]
        eps: Option<f64>,
        /// Neighbor threshold [default: 50 for xjoin, 0 for lsh-filtered]
        #[arg(long)]
        tau: Option<u32>,
        /// XDT method [default: fpr for xjoin, mean for lsh-filtered]
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Target training-set FPR for the fpr method.
        #[arg(long, default_value_t = 0.05)]
        t_fpr: f64,
        /// Groundtruth targets for negative identification.
        #[arg(long, value_enum, default_value_t = SourceArg::Interpolated)]
        source: SourceArg,
        #[command(flatten)]
        lsh: LshArgs,
        /// LSBF bit count [default: |R| * k]
        #[arg(long)]
        m_bits: Option<usize>,
    },
    /// Run one join engine at one ε.
    Join {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, value_enum, default_value_t = EngineArg::Naive)]
        engine: EngineArg,
        #[arg(long)]
        eps: f64,
        /// Filter file [default: the build-filter output for this engine and ε]
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Neighbor threshold of xjoin-oracle.
        #[arg(long, default_value_t = 0)]
        tau: u32,
        #[command(flatten)]
        lsh: LshArgs,
        /// Probed buckets per table.
        #[arg(long, default_value_t = 40)]
        n_p: usize,
    },
    /// End-to-end comparison of the engines in --config.
    Bench,
    /// Speed/quality trade-off sweep over the config's `sweep` grid.
    Sweep,
    /// Train once and evaluate on a fresh draw (config `generalization` section).
    Generalize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Synth { .. } => "synth",
            Command::Groundtruth { .. } => "groundtruth",
            Command::Prepare { .. } => "prepare",
            Command::Train { .. } => "train",
            Command::BuildFilter { .. } => "build-filter",
            Command::Join { .. } => "join",
            Command::Bench => "bench",
            Command::Sweep => "sweep",
            Command::Generalize => "generalize",
        }
    }

    fn takes_experiment_config(&self) -> bool {
        matches!(self, Command::Bench | Command::Sweep | Command::Generalize)
    }
}

/// Parses `argv` and applies `--config` flag overrides.
pub fn resolve<I, T>(argv: I) -> Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv)?;
    let Some(path) = cli.global.config.clone() else {
        return Ok(cli);
    };
    if cli.command.takes_experiment_config() {
        return Ok(cli);
    }
    let value: serde_json::Value = read_json(&path)?;
    let obj = value.as_object().ok_or_else(|| Error::Config(format!("{}: expected a JSON object", path.display())))?;
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => continue,
            serde_json::Value::Bool(true) => {
                argv.push(flag.into());
                continue;
            }
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()))
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => return Err(Error::Config(format!("{key}: nested objects are not flags"))),
        };
        argv.push(format!("{flag}={text}").into());
    }
    Ok(Cli::try_parse_from(&argv)?)
}

/// Runs the CLI and returns the process exit code. Errors go to stderr as one
/// JSON line `{"error": {"kind", "code", "message"}}`.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match resolve(argv) {
        Ok(cli) => cli,
        Err(Error::Clap(e)) => {
            let _ = e.print();
            return Error::Clap(e).exit_code();
        }
        Err(e) => return report_error(&e),
    };
    init_logging(&cli.global.log_level);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    let code = e.exit_code();
    let line = serde_json::json!({"error": {"kind": e.kind(), "code": code, "message": e.to_string()}});
    eprintln!("{line}");
    code
}

fn init_logging(level: &str) {
    let filter = log::LevelFilter::from_str(level).unwrap_or(log::LevelFilter::Info);
    let _ = env_logger::Builder::new().filter_level(filter).format_timestamp(None).try_init();
}

/// Executes a resolved command.
pub fn dispatch(cli: &Cli) -> Result<()> {
    log::info!("{} resolved configuration: {}", cli.command.name(), serde_json::to_string(cli).unwrap_or_default());
    if cli.global.threads == 0 {
        return Err(Error::Usage("--threads must be >= 1".into()));
    }
    let ctx = Ctx { out: cli.global.output_dir.clone(), seed: cli.global.seed, threads: cli.global.threads };
    match &cli.command {
        Command::Ingest { input, format, metric, normalize } => {
            let fmt = format.as_deref().map(VectorFormat::from_str).transpose().map_err(Error::Usage)?;
            ingest(&ctx, input, fmt, (*metric).into(), *normalize)
        }
        Command::Synth { n, d, k, spread, background, sample_seed, metric } => {
            let gm = GaussianMixture::new(*d, *k, *spread, ctx.seed)
                .and_then(|g| g.with_background(*background))
                .stage("synth")?;
            let sample_seed = sample_seed.unwrap_or(ctx.seed);
            let ds = gm.sample(*n, sample_seed).stage("synth")?.dataset.with_name("synth");
            let source = format!("synth n={n} d={d} k={k} spread={spread} background={background} centers_seed={} sample_seed={sample_seed}", ctx.seed);
            save_dataset(&ctx, &ds.with_metric((*metric).into()), source)
        }
        Command::Groundtruth { data, eps_grid, train_fraction, point_fraction } => {
            groundtruth(&ctx, data, *eps_grid, *train_fraction, *point_fraction)
        }
        Command::Prepare { data, strategy, s } => {
            let (r, _) = ctx.load_split(data)?;
            let table = load_table(&ctx.path("table.bin"))?;
            let strategy = match strategy {
                StrategyArg::Uniform => Strategy::Uniform,
                StrategyArg::Atcs => Strategy::Atcs,
            };
            let set = prepare_training_set(&r, &table, strategy, *s, ctx.seed).stage("prepare")?;
            log::info!("prepared {} tuples, top-up fraction {:.4}", set.len(), set.top_up_fraction());
            save_training_set(&ctx.path("training.csv"), &set)
        }
        Command::Train { data, epochs, batch_size, learning_rate, momentum, hidden, transform } => {
            let (r, _) = ctx.load_split(data)?;
            let set = load_training_set(&ctx.path("training.csv"))?;
            let config = TrainConfig {
                epochs: *epochs,
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                momentum: *momentum,
                seed: ctx.seed,
                transform: match transform {
                    TransformArg::Log1p => TargetTransform::Log1p,
                    TransformArg::Raw => TargetTransform::Raw,
                },
                hidden: hidden.clone(),
            };
            let (model, report) = simjoin_core::mlp::fit(&set.tuples, &r, &config, &MonotonicClock::new()).stage("train")?;
            log::info!("trained in {:.2}s, training MAE {:.3}", report.wall_time, report.final_mae);
            save_model(&ctx.path("model.bin"), &model)?;
            write_json(&ctx.path("train_report.json"), &report)
        }
        Command::BuildFilter { data, engine, eps, tau, method, t_fpr, source, lsh, m_bits } => {
            let (r, _) = ctx.load_split(data)?;
            let engine_arg = EngineArg::from(*engine);
            if *engine == FilterEngineArg::NaiveLsbf {
                let m_bits = m_bits.unwrap_or_else(|| LsbfParams::default_bits(r.len(), lsh.k));
                let params = LsbfParams { k: lsh.k, l: lsh.l, w: lsh.w, m_bits, seed: ctx.seed };
                let f = lsbf_build(&r, params).stage("lsbf")?;
                log::info!("LSBF: {} of {} bits set", f.popcount(), m_bits);
                return save_lsbf(&ctx.path("lsbf.json"), &f);
            }
            let eps = eps.ok_or_else(|| Error::Usage(format!("build-filter --engine {} needs --eps", engine_arg.name())))?;
            let tau = tau.unwrap_or(engine_arg.default_tau());
            let method = method.unwrap_or(engine_arg.default_method());
            let selection = match method {
                MethodArg::Fpr => XdtSelection::fpr(*t_fpr, (*source).into()).stage("filter")?,
                MethodArg::Mean => XdtSelection::mean((*source).into()),
            };
            let table = load_table(&ctx.path("table.bin"))?;
            let grid = table.eps_grid();
            let domain = (grid[0], grid[grid.len() - 1]);
            let set = load_training_set(&ctx.path("training.csv"))?;
            let model_path = ctx.path("model.bin");
            let model = load_model(&model_path)?;
            let clock = MonotonicClock::new();
            let f = build_filter(&model, &r, r.metric(), &set.curves(), eps, selection, tau, domain, &clock).stage("filter")?;
            log::info!("XDT {} from {} negatives of {} training points", f.xdt(), f.descriptor().negatives, f.descriptor().training_points);
            let file = FilterFile { model: model_path, descriptor: f.descriptor().clone() };
            write_json(&ctx.filter_path(engine_arg, eps), &file)
        }
        Command::Join { data, engine, eps, filter, tau, lsh, n_p } => {
            let (r, s) = ctx.load_split(data)?;
            let res = join(&ctx, &r, &s, *engine, *eps, filter.as_deref(), *tau, lsh, *n_p)?;
            log::info!(
                "{} at eps {eps}: {} pairs, {} of {} queries searched, {:.4}s",
                engine.name(),
                res.len(),
                res.ppq(),
                s.len(),
                res.total_time
            );
            save_join(&ctx.path(&format!("join_{}_eps{eps}.csv", engine.name())), &res)
        }
        Command::Bench => {
            let (config, out) = ctx.experiment(cli)?;
            let report = run_experiment(&config, &MonotonicClock::new())?;
            write_report(&out, &report)
        }
        Command::Sweep => {
            let (config, out) = ctx.experiment(cli)?;
            let grid = config.sweep.clone().ok_or_else(|| Error::Config("missing 'sweep' section".into()))?;
            let points = tradeoff_sweep(&config, &grid, &MonotonicClock::new())?;
            write_tradeoff(&out.join("tradeoff.csv"), &points)
        }
        Command::Generalize => {
            let (config, out) = ctx.experiment(cli)?;
            let reports = generalization_check(&config, &MonotonicClock::new())?;
            write_generalization(&out.join("generalization.csv"), &reports)?;
            write_json(&out.join("generalization.json"), &reports)
        }
    }
}

/// Written next to every dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub metric: Metric,
    pub n: usize,
    pub d: usize,
    pub source: String,
}

/// R/S row indices of the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train_fraction: f64,
    pub seed: u64,
    pub n: usize,
    pub r: Vec<usize>,
    pub s: Vec<usize>,
    /// Rows of R (indices into `r`) used as training points.
    pub training_points: Vec<usize>,
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    threads: usize,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn filter_path(&self, engine: EngineArg, eps: f64) -> PathBuf {
        self.path(&format!("filter_{}_eps{eps}.json", engine.name()))
    }

    fn dataset_path(&self, data: &DatasetArg) -> PathBuf {
        data.dataset.clone().unwrap_or_else(|| self.path("dataset.fvecs"))
    }

    fn load_dataset(&self, data: &DatasetArg) -> Result<Dataset> {
        let path = self.dataset_path(data);
        let meta_path = path.with_extension("json");
        let metric = if meta_path.exists() { read_json::<DatasetMeta>(&meta_path)?.metric } else { Metric::Cosine };
        let ds = read_vectors(&path, None, metric)?;
        if metric == Metric::Cosine {
            ds.require_unit_norm().stage("dataset")?;
        }
        Ok(ds)
    }

    fn load_split(&self, data: &DatasetArg) -> Result<(Dataset, Dataset)> {
        let ds = self.load_dataset(data)?;
        let path = self.path("split.json");
        let split: SplitFile = read_json(&path)?;
        if split.n != ds.len() {
            return Err(Error::format(&path, format!("split is for {} rows, dataset has {}", split.n, ds.len())));
        }
        Ok((ds.subset(&split.r, "R").stage("split")?, ds.subset(&split.s, "S").stage("split")?))
    }

    fn experiment(&self, cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
        let path = cli
            .global
            .config
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("{} needs --config <experiment.json>", cli.command.name())))?;
        let mut config = ExperimentConfig::load(path)?;
        if config.threads == 1 {
            config.threads = self.threads;
        }
        let out = config.output_dir.clone().unwrap_or_else(|| self.out.clone());
        Ok((config, out))
    }
}

fn save_dataset(ctx: &Ctx, ds: &Dataset, source: String) -> Result<()> {
    let path = ctx.path("dataset.fvecs");
    write_fvecs(&path, ds)?;
    let meta = DatasetMeta { name: ds.name().to_string(), metric: ds.metric(), n: ds.len(), d: ds.dim(), source };
    log::info!("wrote {} vectors of dimension {} to {}", ds.len(), ds.dim(), path.display());
    write_json(&path.with_extension("json"), &meta)
}

fn ingest(ctx: &Ctx, input: &Path, format: Option<VectorFormat>, metric: Metric, normalize: bool) -> Result<()> {
    let ds = read_vectors(input, format, metric)?;
    let ds = if normalize { normalize_unit(&ds).stage("ingest")? } else { ds };
    if metric == Metric::Cosine {
        ds.require_unit_norm().map_err(|e| Error::format(input, format!("{e} (pass --normalize)")))?;
    }
    save_dataset(ctx, &ds, format!("ingest {}", input.display()))
}

fn groundtruth(ctx: &Ctx, data: &DatasetArg, grid: Option<GridArg>, train_fraction: f64, point_fraction: f64) -> Result<()> {
    let ds = ctx.load_dataset(data)?;
    let grid = match grid {
        Some(g) => g.build().stage("grid")?,
        None => EpsilonGrid::default_for(ds.metric()),
    };
    if !(point_fraction > 0.0 && point_fraction <= 1.0) {
        return Err(Error::Usage("--point-fraction must lie in (0, 1]".into()));
    }
    let spec = SplitSpec::new(train_fraction, ctx.seed).stage("split")?;
    let (r_idx, s_idx) = split_indices(ds.len(), &spec).stage("split")?;
    let r = ds.subset(&r_idx, "R").stage("split")?;
    let points = training_points(r.len(), point_fraction, ctx.seed);
    let probes = r.subset(&points, "training-points").stage("groundtruth")?;
    let table = cardinality_grid(&r, &probes, &grid.values, ds.metric())
        .and_then(|t| t.with_points(points.clone()))
        .stage("groundtruth")?;
    let split = SplitFile { train_fraction, seed: ctx.seed, n: ds.len(), r: r_idx, s: s_idx, training_points: points };
    write_json(&ctx.path("split.json"), &split)?;
    save_table(&ctx.path("table.bin"), &table)?;
    save_table_csv(&ctx.path("table.csv"), &table)?;
    log::info!("table: {} points x {} eps values", table.len(), table.m());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn join(
    ctx: &Ctx,
    r: &Dataset,
    s: &Dataset,
    engine: EngineArg,
    eps: f64,
    filter: Option<&Path>,
    tau: u32,
    lsh: &LshArgs,
    n_p: usize,
) -> Result<JoinResult> {
    let clock = MonotonicClock::new();
    let metric = r.metric();
    let brute = BruteForce { r, metric };
    let filter_path = || filter.map(Path::to_path_buf).unwrap_or_else(|| ctx.filter_path(engine, eps));
    let lsh_params = LshParams { k: lsh.k, l: lsh.l, w: lsh.w, seed: ctx.seed };
    match engine {
        EngineArg::Naive => naive_join(r, s, eps, metric, &clock).stage("join"),
        EngineArg::XjoinOracle => {
            let f = LearnedFilter::with_xdt(OracleEstimator::new(r, metric), tau as f64, tau, (0.0, f64::INFINITY));
            filtered_join(&f, &brute, s, eps, &clock).stage("join")
        }
        EngineArg::NaiveLsbf => {
            let path = filter.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("lsbf.json"));
            let f = load_lsbf(&path)?;
            filtered_join(&f, &brute, s, eps, &clock).stage("join")
        }
        EngineArg::Lsh => {
            let index = lsh_build(r, lsh_params).stage("lsh")?;
            let base = LshSearcher { index: &index, n_p, metric };
            filtered_join(&simjoin_core::join::AllPass, &base, s, eps, &clock).stage("join")
        }
        EngineArg::Xjoin | EngineArg::LshFiltered => {
            let f = load_learned(&filter_path(), eps)?;
            if engine == EngineArg::Xjoin {
                filtered_join(&f, &brute, s, eps, &clock).stage("join")
            } else {
                let index = lsh_build(r, lsh_params).stage("lsh")?;
                let base = LshSearcher { index: &index, n_p, metric };
                filtered_join(&f, &base, s, eps, &clock).stage("join")
            }
        }
    }
}

fn load_learned(path: &Path, eps: f64) -> Result<LearnedFilter<simjoin_core::MlpModel>> {
    let file: FilterFile = read_json(path)?;
    let model = load_model(&file.model)?;
    if file.descriptor.eps != eps {
        log::warn!("filter {} was built for eps {}, joining at {eps}", path.display(), file.descriptor.eps);
    }
    Ok(LearnedFilter::from_descriptor(model, file.descriptor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        let g: GridArg = "0.4:0.9:100".parse().unwrap();
        assert_eq!((g.c_min, g.c_max, g.m), (0.4, 0.9, 100));
        assert!("0.4:0.9".parse::<GridArg>().is_err());
        assert!("0.9:0.4:10".parse::<GridArg>().is_err());
        assert!("a:0.9:10".parse::<GridArg>().is_err());
    }

    #[test]
    fn unknown_flags_are_rejected() {
        let err = resolve(["simjoin", "synth", "--bogus", "1"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert_eq!(err.kind(), "usage");
    }

    #[test]
    fn help_lists_defaults() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let prepare = cmd.find_subcommand_mut("prepare").unwrap().render_long_help().to_string();
        assert!(prepare.contains("[default: 6]"), "{prepare}");
        assert!(prepare.contains("[default: atcs]"));
        let gt = cmd.find_subcommand_mut("groundtruth").unwrap().render_long_help().to_string();
        assert!(gt.contains("0.4:0.9:100"));
        let bf = cmd.find_subcommand_mut("build-filter").unwrap().render_long_help().to_string();
        assert!(bf.contains("[default: 0.05]"));
        assert!(bf.contains("50 for xjoin"));
    }

    #[test]
    fn config_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("flags.json");
        std::fs::write(&cfg, r#"{"n": 50, "spread": 0.2, "hidden_ignored": null}"#).unwrap();
        let cli = resolve(["simjoin", "synth", "--n", "10", "--config", cfg.to_str().unwrap()]).unwrap();
        match cli.command {
            Command::Synth { n, spread, .. } => assert_eq!((n, spread), (50, 0.2)),
            other => panic!("{other:?}"),
        }
        std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
        assert!(resolve(["simjoin", "synth", "--config", cfg.to_str().unwrap()]).is_err());
    }

    #[test]
    fn per_engine_defaults() {
        assert_eq!(EngineArg::Xjoin.default_tau(), 50);
        assert_eq!(EngineArg::LshFiltered.default_tau(), 0);
        assert_eq!(EngineArg::LshFiltered.default_method(), MethodArg::Mean);
        assert_eq!(EngineArg::Xjoin.default_method(), MethodArg::Fpr);
    }
}
