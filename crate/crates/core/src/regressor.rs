//! ReLU multilayer perceptron with L1 loss, trained by Adam, plus the
//! correlation and MAE-explained metrics used to compare feature sets.

use std::fmt::Write as _;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{lower_median, pearson, substream};
use crate::{Error, Result};

pub const HIDDEN_SIZES: [usize; 5] = [512, 256, 128, 64, 32];
pub const L2_GRID: [f64; 4] = [0.0, 1e-5, 1e-4, 1e-3];
pub const DROPOUT_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_sizes: Vec<usize>,
    pub l2: f64,
    pub dropout: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(hidden_sizes: Vec<usize>, l2: f64, dropout: f64, seed: u64) -> Result<Self> {
        let config = MlpConfig {
            hidden_sizes,
            l2,
            dropout,
            lr: 1e-3,
            max_epochs: 20,
            batch_size: 32,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match self.hidden_sizes.as_slice() {
            [h1] if *h1 > 0 => {}
            [h1, h2] if *h1 > 0 && *h2 > 0 => {
                if *h2 > h1 / 2 {
                    return Err(Error::invalid(format!("second hidden layer {h2} exceeds half of {h1}")));
                }
            }
            other => {
                return Err(Error::invalid(format!(
                    "need one or two positive hidden sizes, got {other:?}"
                )))
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!(
                "l2 penalty {} must be a nonnegative number",
                self.l2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("max_epochs and batch_size must be positive"));
        }
        Ok(())
    }

    /// Trainable parameter count for the given input and output widths.
    pub fn parameter_count(&self, input: usize, output: usize) -> usize {
        let dims = layer_dims(input, &self.hidden_sizes, output);
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn order_key(&self) -> (Vec<usize>, f64, f64) {
        (self.hidden_sizes.clone(), self.l2, self.dropout)
    }
}

/// Every hidden-size, penalty and dropout combination of the search grid.
pub fn hyperparameter_grid(seed: u64) -> Vec<MlpConfig> {
    let mut archs: Vec<Vec<usize>> = HIDDEN_SIZES.iter().map(|&h| vec![h]).collect();
    for &h1 in &HIDDEN_SIZES {
        for &h2 in &HIDDEN_SIZES {
            if h2 <= h1 / 2 {
                archs.push(vec![h1, h2]);
            }
        }
    }
    let mut grid = Vec::new();
    for arch in archs {
        for &l2 in &L2_GRID {
            for &dropout in &DROPOUT_GRID {
                grid.push(MlpConfig::new(arch.clone(), l2, dropout, seed).expect("grid values are valid"));
            }
        }
    }
    grid
}

fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `input × output`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
}

impl MlpModel {
    /// Uniform(±1/√fan_in) initialization for weights and biases.
    pub fn init(input: usize, output: usize, config: &MlpConfig, rng: &mut impl Rng) -> Self {
        let dims = layer_dims(input, &config.hidden_sizes, output);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0].max(1) as f64).sqrt();
                let mut draw = || rng.random_range(-bound..=bound);
                Layer {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), &mut draw),
                    b: Array1::from_shape_simple_fn(w[1], &mut draw),
                }
            })
            .collect();
        MlpModel {
            config: config.clone(),
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }
}

struct Pass {
    /// Input to each layer; the first entry is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Per hidden layer: ReLU derivative times the dropout scale.
    gates: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward(model: &MlpModel, x: ArrayView2<'_, f64>, dropout: Option<(f64, &mut ChaCha8Rng)>) -> Pass {
    let mut inputs = vec![x.to_owned()];
    let mut gates = Vec::new();
    let last = model.layers.len() - 1;
    let mut dropout = dropout;
    for (l, layer) in model.layers.iter().enumerate() {
        let mut z = inputs[l].dot(&layer.w) + &layer.b;
        if l == last {
            return Pass {
                inputs,
                gates,
                output: z,
            };
        }
        let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        if let Some((p, rng)) = dropout.as_mut() {
            let scale = 1.0 / (1.0 - *p);
            gate.mapv_inplace(|g| if rng.random::<f64>() < *p { 0.0 } else { g * scale });
        }
        z *= &gate;
        gates.push(gate);
        inputs.push(z);
    }
    unreachable!("the output layer returns")
}

/// Mean absolute error over the finite target entries. Non-finite targets mark missing labels.
fn l1(pred: &Array2<f64>, y: ArrayView2<'_, f64>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for (p, t) in pred.iter().zip(y.iter()) {
        if t.is_finite() {
            sum += (p - t).abs();
            n += 1;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, n)
}

/// Weight and bias gradients of one layer.
pub type LayerGrad = (Array2<f64>, Array1<f64>);

/// Penalized L1 loss and its gradient, `(dW, db)` per layer.
fn loss_and_gradient(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> (f64, Vec<LayerGrad>) {
    let pass = forward(model, x, dropout);
    let (data_loss, n) = l1(&pass.output, y);
    let l2 = model.config.l2;
    let penalty: f64 = model
        .layers
        .iter()
        .map(|l| l.w.iter().map(|w| w * w).sum::<f64>())
        .sum();

    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let mut delta = Array2::from_shape_fn(pass.output.dim(), |(i, j)| {
        let t = y[[i, j]];
        if t.is_finite() {
            (pass.output[[i, j]] - t).signum() * f64::from(pass.output[[i, j]] != t) * inv_n
        } else {
            0.0
        }
    });
    let mut grads = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let dw = pass.inputs[l].t().dot(&delta) + &(&layer.w * (2.0 * l2));
        let db = delta.sum_axis(Axis(0));
        grads.push((dw, db));
        if l > 0 {
            delta = delta.dot(&layer.w.t()) * &pass.gates[l - 1];
        }
    }
    grads.reverse();
    (data_loss + l2 * penalty, grads)
}

/// The penalized training objective without dropout, and its gradient.
pub fn objective(model: &MlpModel, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> (f64, Vec<LayerGrad>) {
    loss_and_gradient(model, x, y, None)
}

struct Adam {
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &MlpModel) -> Self {
        let zeros: Vec<_> = model
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[LayerGrad], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (l, (gw, gb)) in grads.iter().enumerate() {
            let layer = &mut model.layers[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// A trained model with the development L1 after every completed epoch.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    pub dev_l1: Vec<f64>,
    /// Development L1 of the returned parameters.
    pub selected_dev_l1: f64,
    pub stopped_early: bool,
}

fn check_shapes(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::invalid("training data must be nonempty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features contain non-finite values"));
    }
    Ok(())
}

/// Trains with shuffled minibatches and stops at the first epoch whose
/// development L1 rises, keeping the previous epoch's parameters.
pub fn train(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dev_x: ArrayView2<'_, f64>,
    dev_y: ArrayView2<'_, f64>,
    config: &MlpConfig,
) -> Result<Trained> {
    config.validate()?;
    check_shapes(x, y)?;
    check_shapes(dev_x, dev_y)?;
    if dev_x.ncols() != x.ncols() || dev_y.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: dev_x.ncols(),
        });
    }

    let mut init_rng = substream(config.seed, 0);
    let mut shuffle_rng = substream(config.seed, 1);
    let mut dropout_rng = substream(config.seed, 2);
    let mut model = MlpModel::init(x.ncols(), y.ncols(), config, &mut init_rng);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut dev_l1 = Vec::new();
    let mut previous = model.clone();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by = y.select(Axis(0), batch);
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut dropout_rng));
            let (loss, grads) = loss_and_gradient(&model, bx.view(), by.view(), dropout);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(&mut model, &grads, config.lr);
        }
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let (dev, _) = l1(&forward(&model, dev_x, None).output, dev_y);
        if !dev.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if let Some(&last) = dev_l1.last() {
            if dev > last {
                dev_l1.push(dev);
                return Ok(Trained {
                    model: previous,
                    dev_l1,
                    selected_dev_l1: last,
                    stopped_early: true,
                });
            }
        }
        dev_l1.push(dev);
        previous = model.clone();
    }
    let selected_dev_l1 = *dev_l1.last().expect("at least one epoch");
    Ok(Trained {
        model,
        dev_l1,
        selected_dev_l1,
        stopped_early: false,
    })
}

/// Forward pass without dropout.
pub fn predict(model: &MlpModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.ncols(),
        });
    }
    Ok(forward(model, x, None).output)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: MlpConfig,
    pub dev_l1: f64,
    pub parameters: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: MlpConfig,
    pub model: MlpModel,
    pub points: Vec<GridPoint>,
}

/// Trains every grid point and keeps the lowest development L1. Ties go to
/// fewer parameters, then to the smaller `(hidden sizes, l2, dropout)`.
/// Point `i` trains with a seed drawn from substream `i` of `seed`.
pub fn grid_search(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dev_x: ArrayView2<'_, f64>,
    dev_y: ArrayView2<'_, f64>,
    grid: &[MlpConfig],
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let run = |(i, config): (usize, &MlpConfig)| -> Result<(MlpConfig, Trained)> {
        let mut config = config.clone();
        config.seed = substream(seed, i as u64).next_u64();
        let trained = train(x, y, dev_x, dev_y, &config)?;
        Ok((config, trained))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(MlpConfig, Trained)>> = {
        use rayon::prelude::*;
        grid.par_iter().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(MlpConfig, Trained)>> = grid.iter().enumerate().map(run).collect();

    let results: Vec<(MlpConfig, Trained)> = results.into_iter().collect::<Result<_>>()?;
    let points: Vec<GridPoint> = results
        .iter()
        .map(|(c, t)| GridPoint {
            config: c.clone(),
            dev_l1: t.selected_dev_l1,
            parameters: t.model.parameter_count(),
        })
        .collect();
    let best = (0..points.len())
        .min_by(|&a, &b| {
            let (pa, pb) = (&points[a], &points[b]);
            pa.dev_l1
                .total_cmp(&pb.dev_l1)
                .then(pa.parameters.cmp(&pb.parameters))
                .then_with(|| {
                    let (ka, kb) = (pa.config.order_key(), pb.config.order_key());
                    ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
                })
        })
        .expect("grid is nonempty");
    let (config, trained) = results.into_iter().nth(best).expect("index in range");
    Ok(GridResult {
        best: config,
        model: trained.model,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R1Weighting {
    #[default]
    BaselineMae,
    ModelMae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyEval {
    pub property: String,
    pub rho: f64,
    /// False when ρ was undefined (constant predictions or targets) and reported as 0.
    pub rho_defined: bool,
    pub mae: f64,
    pub baseline_mae: f64,
    pub r1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub properties: Vec<PropertyEval>,
    pub wr1: f64,
    pub weighting: R1Weighting,
}

/// Pearson ρ, MAE and MAE explained relative to always guessing the
/// (lower) median of the targets, per output column.
pub fn evaluate(
    predictions: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    property_names: &[&str],
    weighting: R1Weighting,
) -> Result<EvalReport> {
    if predictions.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if property_names.len() != targets.ncols() {
        return Err(Error::DimensionMismatch {
            expected: targets.ncols(),
            got: property_names.len(),
        });
    }
    let mut properties = Vec::with_capacity(targets.ncols());
    for (j, name) in property_names.iter().enumerate() {
        let (pred, gold): (Vec<f64>, Vec<f64>) = predictions
            .column(j)
            .iter()
            .zip(targets.column(j).iter())
            .filter(|(_, t)| t.is_finite())
            .map(|(&p, &t)| (p, t))
            .unzip();
        if gold.len() < 2 {
            return Err(Error::invalid(format!(
                "{name}: need at least 2 labelled rows, got {}",
                gold.len()
            )));
        }
        let median = lower_median(&gold).expect("nonempty");
        let n = gold.len() as f64;
        let mae = pred.iter().zip(&gold).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
        let baseline_mae = gold.iter().map(|t| (median - t).abs()).sum::<f64>() / n;
        if baseline_mae == 0.0 {
            return Err(Error::Undefined(format!("{name}: constant targets leave R1 undefined")));
        }
        let rho = pearson(&pred, &gold);
        properties.push(PropertyEval {
            property: name.to_string(),
            rho: rho.unwrap_or(0.0),
            rho_defined: rho.is_some(),
            mae,
            baseline_mae,
            r1: 1.0 - mae / baseline_mae,
            n: gold.len(),
        });
    }
    let weight = |p: &PropertyEval| match weighting {
        R1Weighting::BaselineMae => p.baseline_mae,
        R1Weighting::ModelMae => p.mae,
    };
    let total: f64 = properties.iter().map(weight).sum();
    let wr1 = if total > 0.0 {
        properties.iter().map(|p| weight(p) * p.r1).sum::<f64>() / total
    } else {
        // Only reachable with ModelMae weights and a perfect model.
        properties.iter().map(|p| p.r1).sum::<f64>() / properties.len() as f64
    };
    Ok(EvalReport {
        properties,
        wr1,
        weighting,
    })
}

/// Text table with one row per feature-set pattern: ρ and R1 per property
/// (both ×100) and the weighted R1.
pub fn format_ablation_table(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let _ = write!(out, "{:<4} {:<5} {:<5} {:<4}", "Type", "Token", "GloVe", "Ctx");
    for p in &first.properties {
        let _ = write!(out, " | {:^15}", p.property);
    }
    out.push_str(" |   All\n");
    let _ = write!(out, "{:<21}", "");
    for _ in &first.properties {
        let _ = write!(out, " | {:>7} {:>7}", "rho", "R1");
    }
    out.push_str(" |   wR1\n");
    for (pattern, report) in rows {
        let flags: Vec<char> = pattern.chars().collect();
        let flag = |i: usize| flags.get(i).copied().unwrap_or('?');
        let _ = write!(out, "{:<4} {:<5} {:<5} {:<4}", flag(0), flag(1), flag(2), flag(3));
        for p in &report.properties {
            let _ = write!(out, " | {:>7.1} {:>7.1}", 100.0 * p.rho, 100.0 * p.r1);
        }
        let _ = writeln!(out, " | {:>5.1}", 100.0 * report.wr1);
    }
    out
}

const MAGIC: &[u8; 4] = b"UDSG";
const FORMAT_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

/// Writes `UDSG`, the format version, the layer count, every layer width,
/// then each layer's weights (row-major, input × output) and biases as
/// little-endian `f32`.
pub fn save_model(model: &MlpModel, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    let dims = layer_dims(model.input_dim(), &model.config.hidden_sizes, model.output_dim());
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for layer in &model.layers {
        for v in layer.w.iter().chain(layer.b.iter()) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a model written by [`save_model`]. Training hyperparameters other
/// than the hidden sizes are not stored and come back as defaults.
pub fn load_model(mut r: impl Read) -> Result<MlpModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a UDSG model file"));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported model format version {version}")));
    }
    let n_layers = read_u32(&mut r)? as usize;
    if !(2..=3).contains(&n_layers) {
        return Err(Error::invalid(format!("unsupported layer count {n_layers}")));
    }
    let dims: Vec<usize> = (0..=n_layers)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(Error::invalid("zero-width layer"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for w in dims.windows(2) {
        let weights: Vec<f64> = (0..w[0] * w[1])
            .map(|_| read_f32(&mut r).map(f64::from))
            .collect::<Result<_>>()?;
        let bias: Vec<f64> = (0..w[1])
            .map(|_| read_f32(&mut r).map(f64::from))
            .collect::<Result<_>>()?;
        layers.push(Layer {
            w: Array2::from_shape_vec((w[0], w[1]), weights).expect("length matches shape"),
            b: Array1::from(bias),
        });
    }
    let hidden = dims[1..n_layers].to_vec();
    let config = MlpConfig {
        hidden_sizes: hidden,
        l2: 0.0,
        dropout: 0.0,
        lr: 1e-3,
        max_epochs: 20,
        batch_size: 32,
        seed: 0,
    };
    let model = MlpModel { config, layers };
    if !model.is_finite() {
        return Err(Error::invalid("model file holds non-finite parameters"));
    }
    Ok(model)
}
