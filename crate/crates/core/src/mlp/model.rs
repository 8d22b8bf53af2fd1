use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{mse_loss, Network, Sgd, Workspace};
use crate::clock::Clock;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::CardinalityEstimator;
use crate::math;
use crate::rng::{self, Purpose};
use crate::sampling::TrainingTuple;

/// Transform applied to raw counts before regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetTransform {
    Raw,
    /// `ln(1 + t)`, inverted with `exp(y) - 1`.
    Log1p,
}

impl TargetTransform {
    pub fn forward(self, t: f64) -> f64 {
        match self {
            TargetTransform::Raw => t,
            TargetTransform::Log1p => math::ln_1p(t.max(0.0)),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            TargetTransform::Raw => y,
            TargetTransform::Log1p => math::exp_m1(y),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub transform: TargetTransform,
    /// Hidden layer widths; input is `d + 1`, output is 1.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
            transform: TargetTransform::Log1p,
            hidden: alloc::vec![512, 512, 256, 128],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean standardized squared error per epoch.
    pub epoch_losses: Vec<f64>,
    /// On the training tuples, in raw count units.
    pub final_mae: f64,
    pub final_mse: f64,
    pub wall_time: f64,
}

/// Per-feature affine standardization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column statistics of a row-major `n x cols` matrix; constant columns get `std = 1`.
    pub fn fit(rows: &[f64], cols: usize) -> Self {
        let n = (rows.len() / cols).max(1) as f64;
        let mut mean = alloc::vec![0.0; cols];
        for row in rows.chunks_exact(cols) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; cols];
        for row in rows.chunks_exact(cols) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = math::sqrt(v / n);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(cols: usize) -> Self {
        Self { mean: alloc::vec![0.0; cols], std: alloc::vec![1.0; cols] }
    }

    #[inline]
    pub fn apply(&self, col: usize, x: f64) -> f64 {
        (x - self.mean[col]) / self.std[col]
    }

    #[inline]
    pub fn invert(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }
}

/// Trained estimator: a ReLU network over standardized `(point, ε)` features
/// predicting standardized transformed counts.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    dim: usize,
    net: Network<f32>,
    transform: TargetTransform,
    inputs: Standardizer,
    target: Standardizer,
}

const PREDICT_CHUNK: usize = 1024;

impl MlpModel {
    /// Assembles a model from stored parts, checking that the shapes chain.
    pub fn from_parts(
        dim: usize,
        net: Network<f32>,
        transform: TargetTransform,
        inputs: Standardizer,
        target: Standardizer,
    ) -> Result<Self> {
        let shape_err = |msg: &str| Err(Error::ShapeMismatch(alloc::string::String::from(msg)));
        if net.layers.is_empty() || net.input_dim() != dim + 1 || net.output_dim() != 1 {
            return shape_err("network must map d + 1 inputs to 1 output");
        }
        if net.layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return shape_err("layer widths do not chain");
        }
        if net
            .layers
            .iter()
            .any(|l| l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs)
        {
            return shape_err("parameter buffer sizes do not match layer widths");
        }
        if inputs.mean.len() != dim + 1 || inputs.std.len() != dim + 1 {
            return shape_err("input standardizer must have d + 1 columns");
        }
        if target.mean.len() != 1 || target.std.len() != 1 {
            return shape_err("target standardizer must have 1 column");
        }
        if !net.is_finite() {
            return Err(Error::invalid("model parameters are not finite"));
        }
        Ok(Self { dim, net, transform, inputs, target })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn transform(&self) -> TargetTransform {
        self.transform
    }

    pub fn input_standardizer(&self) -> &Standardizer {
        &self.inputs
    }

    pub fn target_standardizer(&self) -> &Standardizer {
        &self.target
    }

    fn push_features(&self, buf: &mut Vec<f32>, point: &[f64], eps: f64) {
        for (c, &x) in point.iter().enumerate() {
            buf.push(self.inputs.apply(c, x) as f32);
        }
        buf.push(self.inputs.apply(self.dim, eps) as f32);
    }

    fn decode(&self, y: f32) -> f64 {
        let t = self.transform.inverse(self.target.invert(0, y as f64));
        if t > 0.0 {
            t
        } else {
            0.0
        }
    }

    /// Batched forward pass over `(point, ε)` pairs.
    fn predict_iter<'a, I>(&self, items: I, hint: usize) -> Vec<f64>
    where
        I: Iterator<Item = (&'a [f64], f64)>,
    {
        let mut out = Vec::with_capacity(hint);
        let mut ws = Workspace::new();
        let mut buf = Vec::with_capacity(PREDICT_CHUNK * (self.dim + 1));
        let mut pending = 0;
        let mut flush = |buf: &mut Vec<f32>, pending: &mut usize, out: &mut Vec<f64>| {
            if *pending > 0 {
                let y = self.net.forward(buf, *pending, &mut ws);
                out.extend(y.iter().map(|&v| self.decode(v)));
                buf.clear();
                *pending = 0;
            }
        };
        for (point, eps) in items {
            self.push_features(&mut buf, point, eps);
            pending += 1;
            if pending == PREDICT_CHUNK {
                flush(&mut buf, &mut pending, &mut out);
            }
        }
        flush(&mut buf, &mut pending, &mut out);
        out
    }

    /// Predictions for explicit `(point, ε)` tuples over `points`.
    pub fn predict_tuples(&self, points: &Dataset, tuples: &[TrainingTuple]) -> Result<Vec<f64>> {
        if points.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: points.dim() });
        }
        if let Some(t) = tuples.iter().find(|t| t.point_index >= points.len()) {
            return Err(Error::ShapeMismatch(alloc::format!("tuple refers to point {}", t.point_index)));
        }
        Ok(self.predict_iter(tuples.iter().map(|t| (points.get(t.point_index), t.eps)), tuples.len()))
    }
}

impl CardinalityEstimator for MlpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, point: &[f64], eps: f64) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        Ok(self.predict_iter(core::iter::once((point, eps)), 1)[0])
    }

    fn predict_rows(&self, points: &Dataset, rows: &[usize], eps: f64) -> Result<Vec<f64>> {
        if points.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: points.dim() });
        }
        Ok(self.predict_iter(rows.iter().map(|&i| (points.get(i), eps)), rows.len()))
    }

    fn predict_batch(&self, points: &Dataset, eps: f64) -> Result<Vec<f64>> {
        if points.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: points.dim() });
        }
        Ok(self.predict_iter(points.iter().map(|p| (p, eps)), points.len()))
    }
}

/// Trains a fresh network on `train`, whose point indices refer to rows of `r`.
///
/// Inputs are `point ++ [ε]` standardized per feature with statistics from the
/// training tuples; targets are transformed, then standardized. Initialization
/// and shuffling draw from seeded streams, so equal inputs give bit-identical
/// weights.
pub fn fit(
    train: &[TrainingTuple],
    r: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(MlpModel, TrainingReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(t) = train.iter().find(|t| t.point_index >= r.len()) {
        return Err(Error::ShapeMismatch(alloc::format!("tuple refers to point {} outside R", t.point_index)));
    }
    let start = clock.now();
    let dim = r.dim();
    let cols = dim + 1;
    let n = train.len();

    let mut raw = Vec::with_capacity(n * cols);
    for t in train {
        raw.extend_from_slice(r.get(t.point_index));
        raw.push(t.eps);
    }
    let inputs = Standardizer::fit(&raw, cols);
    let features: Vec<f32> = raw
        .chunks_exact(cols)
        .flat_map(|row| row.iter().enumerate().map(|(c, &x)| inputs.apply(c, x) as f32))
        .collect();
    drop(raw);
    let transformed: Vec<f64> = train.iter().map(|t| config.transform.forward(t.target)).collect();
    let target = Standardizer::fit(&transformed, 1);
    let targets: Vec<f32> = transformed.iter().map(|&y| target.apply(0, y) as f32).collect();

    let mut widths = alloc::vec![cols];
    widths.extend_from_slice(&config.hidden);
    widths.push(1);
    let mut net: Network<f32> = Network::he_init(&widths, &mut rng::seeded(config.seed, Purpose::WeightInit));
    let mut opt = Sgd::new(&net, config.learning_rate, config.momentum);
    let mut grads = net.zeros_like();
    let mut ws = Workspace::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::seeded(config.seed, Purpose::Shuffle);
    let mut xb: Vec<f32> = Vec::with_capacity(config.batch_size * cols);
    let mut tb: Vec<f32> = Vec::with_capacity(config.batch_size);
    let mut d_out: Vec<f32> = Vec::with_capacity(config.batch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            xb.clear();
            tb.clear();
            for &i in chunk {
                xb.extend_from_slice(&features[i * cols..(i + 1) * cols]);
                tb.push(targets[i]);
            }
            let pred = net.forward(&xb, chunk.len(), &mut ws);
            let loss = mse_loss(pred, &tb, &mut d_out);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss * chunk.len() as f64;
            net.backward(&d_out, &mut ws, &mut grads);
            opt.step(&mut net, &grads);
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    if !net.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs.saturating_sub(1) });
    }

    let model = MlpModel { dim, net, transform: config.transform, inputs, target };
    let preds = model.predict_tuples(r, train)?;
    let (final_mae, final_mse) = errors(&preds, train);
    let report = TrainingReport { epoch_losses, final_mae, final_mse, wall_time: clock.since(start) };
    Ok((model, report))
}

fn errors(preds: &[f64], tuples: &[TrainingTuple]) -> (f64, f64) {
    let n = tuples.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(tuples) {
        let e = p - t.target;
        abs += e.abs();
        sq += e * e;
    }
    (abs / n, sq / n)
}

/// `(MAE, MSE)` of any estimator on tuples with exact targets, in count units.
pub fn evaluate<E: CardinalityEstimator + ?Sized>(
    model: &E,
    points: &Dataset,
    tuples: &[TrainingTuple],
) -> Result<(f64, f64)> {
    if tuples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut preds = Vec::with_capacity(tuples.len());
    // Group consecutive tuples sharing an ε to use the batched path.
    let mut i = 0;
    while i < tuples.len() {
        let eps = tuples[i].eps;
        let mut j = i;
        while j < tuples.len() && tuples[j].eps == eps {
            j += 1;
        }
        let rows: Vec<usize> = tuples[i..j].iter().map(|t| t.point_index).collect();
        if let Some(&bad) = rows.iter().find(|&&p| p >= points.len()) {
            return Err(Error::ShapeMismatch(alloc::format!("tuple refers to point {bad}")));
        }
        preds.extend(model.predict_rows(points, &rows, eps)?);
        i = j;
    }
    Ok(errors(&preds, tuples))
}
