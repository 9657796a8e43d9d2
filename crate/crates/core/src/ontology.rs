//! RBF support vector classification of property-score vectors into clause
//! types, with stratified nested cross-validation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::math::substream;
use crate::{Error, Result};

pub const LAMBDA_GRID: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
pub const BANDWIDTH_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseLabel {
    Eventive,
    Stative,
    Habitual,
    Generic,
}

impl ClauseLabel {
    pub const ALL: [ClauseLabel; 4] = [
        ClauseLabel::Eventive,
        ClauseLabel::Stative,
        ClauseLabel::Habitual,
        ClauseLabel::Generic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClauseLabel::Eventive => "eventive",
            ClauseLabel::Stative => "stative",
            ClauseLabel::Habitual => "habitual",
            ClauseLabel::Generic => "generic",
        }
    }
}

impl FromStr for ClauseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_lowercase();
        ClauseLabel::ALL
            .into_iter()
            .find(|l| l.name() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown clause label `{s}`")))
    }
}

impl fmt::Display for ClauseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `lambda` is the inverse of the box constraint, `C = 1/lambda`;
/// `bandwidth` is γ in `exp(−γ‖x − x′‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcConfig {
    pub lambda: f64,
    pub bandwidth: f64,
}

impl SvcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda > 0.0 && self.lambda.is_finite() && self.bandwidth > 0.0 && self.bandwidth.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("SVC parameters must be positive: {self:?}")))
        }
    }

    pub fn c(&self) -> f64 {
        1.0 / self.lambda
    }
}

/// Every (λ, γ) pair of the search grid.
pub fn svc_grid() -> Vec<SvcConfig> {
    LAMBDA_GRID
        .iter()
        .flat_map(|&lambda| {
            BANDWIDTH_GRID
                .iter()
                .map(move |&bandwidth| SvcConfig { lambda, bandwidth })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoOptions {
    pub tol: f64,
    /// Iteration cap as a multiple of the training-set size.
    pub max_passes: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: 1e-3,
            max_passes: 1000,
        }
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// A two-class machine: `f(x) = Σ αᵢ yᵢ k(xᵢ, x) − ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvc {
    pub support: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvc {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(s, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }
}

/// Dual solution with its training data, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub model: BinarySvc,
}

impl SmoSolution {
    /// Largest KKT violation over the training points, measured on `yᵢ f(xᵢ)`.
    pub fn max_kkt_violation(&self, x: &[Vec<f64>]) -> f64 {
        let c = self.model.c;
        let mut worst: f64 = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let margin = self.y[i] * self.model.decision(xi);
            let a = self.alpha[i];
            let violation = if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(violation);
        }
        worst
    }
}

/// Solves the C-SVC dual by sequential minimal optimization, choosing the
/// maximal violating pair at each step. Labels are ±1.
pub fn smo(x: &[Vec<f64>], y: &[f64], config: &SvcConfig, options: &SmoOptions) -> Result<SmoSolution> {
    config.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("binary SVC needs both classes"));
    }
    let c = config.c();
    let gamma = config.bandwidth;
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf(&x[i], &x[j], gamma)).collect())
        .collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα − eᵀα.
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let max_iter = options.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < options.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let curvature = (q(i, i) + q(j, j) - 2.0 * y[i] * y[j] * q(i, j)).max(1e-12);
        // Move along yᵢ Δαᵢ = −yⱼ Δαⱼ by the unconstrained step, then clip.
        let step = (g_max - g_min) / curvature;
        let mut di = y[i] * step;
        let mut dj = -y[j] * step;
        let room = |a: f64, d: f64| {
            if d > 0.0 {
                (c - a) / d
            } else if d < 0.0 {
                -a / d
            } else {
                f64::INFINITY
            }
        };
        let scale = room(ai_old, di).min(room(aj_old, dj)).min(1.0);
        di *= scale;
        dj *= scale;
        alpha[i] = (ai_old + di).clamp(0.0, c);
        alpha[j] = (aj_old + dj).clamp(0.0, c);
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // ρ from free vectors, or the midpoint of the feasible interval.
    let mut free_sum = 0.0;
    let mut free_n = 0;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_n += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(x[t].clone());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SmoSolution {
        alpha,
        y: y.to_vec(),
        model: BinarySvc {
            support,
            coef,
            rho,
            gamma,
            c,
            iterations,
            converged,
        },
    })
}

/// One-vs-one machines over the classes present in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub config: SvcConfig,
    pub classes: Vec<ClauseLabel>,
    /// Machine for `(classes[a], classes[b])`, positive side `a`.
    pub machines: Vec<(usize, usize, BinarySvc)>,
}

impl SvcModel {
    /// Majority vote; ties go to the larger summed decision value, then to
    /// the earlier class.
    pub fn predict_one(&self, x: &[f64]) -> ClauseLabel {
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut score = vec![0.0; k];
        for (a, b, m) in &self.machines {
            let d = m.decision(x);
            if d > 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
            score[*a] += d;
            score[*b] -= d;
        }
        let best = (0..k)
            .max_by(|&p, &q| {
                votes[p]
                    .cmp(&votes[q])
                    .then(score[p].total_cmp(&score[q]))
                    .then(q.cmp(&p))
            })
            .expect("at least two classes");
        self.classes[best]
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<ClauseLabel> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }
}

pub fn train_svc(x: &[Vec<f64>], y: &[ClauseLabel], config: &SvcConfig, options: &SmoOptions) -> Result<SvcModel> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let Some(w) = x.first().map(Vec::len) {
        if let Some(bad) = x.iter().find(|r| r.len() != w) {
            return Err(Error::DimensionMismatch {
                expected: w,
                got: bad.len(),
            });
        }
    }
    let mut classes: Vec<ClauseLabel> = y.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("SVC training needs at least two classes"));
    }
    let mut machines = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (row, &label) in x.iter().zip(y) {
                if label == classes[a] || label == classes[b] {
                    xs.push(row.clone());
                    ys.push(if label == classes[a] { 1.0 } else { -1.0 });
                }
            }
            machines.push((a, b, smo(&xs, &ys, config, options)?.model));
        }
    }
    Ok(SvcModel {
        config: *config,
        classes,
        machines,
    })
}

/// Assigns each row to one of `k` folds so every class is spread evenly.
pub fn stratified_folds(y: &[ClauseLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let mut by_class: BTreeMap<ClauseLabel, Vec<usize>> = BTreeMap::new();
    for (i, &label) in y.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = substream(seed, 0);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for (label, mut members) in by_class {
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {label} has {} rows, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Accuracy,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ClauseLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Precision, recall and F1 per class present in `gold` or `pred`; an
/// empty denominator yields 0.
pub fn class_metrics(pred: &[ClauseLabel], gold: &[ClauseLabel]) -> Vec<ClassMetrics> {
    let mut labels: Vec<ClauseLabel> = pred.iter().chain(gold).copied().collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .map(|label| {
            let tp = pred
                .iter()
                .zip(gold)
                .filter(|(p, g)| **p == label && **g == label)
                .count() as f64;
            let predicted = pred.iter().filter(|p| **p == label).count() as f64;
            let actual = gold.iter().filter(|g| **g == label).count();
            let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual as f64);
            ClassMetrics {
                label,
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support: actual,
            }
        })
        .collect()
}

fn accuracy(pred: &[ClauseLabel], gold: &[ClauseLabel]) -> f64 {
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len().max(1) as f64
}

pub fn macro_f1(pred: &[ClauseLabel], gold: &[ClauseLabel]) -> f64 {
    let m = class_metrics(pred, gold);
    m.iter().map(|c| c.f1).sum::<f64>() / m.len().max(1) as f64
}

/// Chance-corrected agreement between two labelings.
pub fn cohen_kappa<T: Ord + Copy>(pred: &[T], gold: &[T]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::invalid("cohen_kappa needs at least one pair"));
    }
    let n = gold.len() as f64;
    let p_o = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / n;
    let mut margins: BTreeMap<T, (f64, f64)> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        margins.entry(p).or_default().0 += 1.0;
        margins.entry(g).or_default().1 += 1.0;
    }
    let p_e: f64 = margins.values().map(|(a, b)| (a / n) * (b / n)).sum();
    if p_e >= 1.0 {
        return Err(Error::Undefined("kappa with chance agreement 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn select_config(
    x: &[Vec<f64>],
    y: &[ClauseLabel],
    grid: &[SvcConfig],
    inner_k: usize,
    seed: u64,
    selection: Selection,
    options: &SmoOptions,
) -> Result<SvcConfig> {
    let folds = stratified_folds(y, inner_k, seed)?;
    let mut best: Option<(f64, SvcConfig)> = None;
    for config in grid {
        let mut pred = vec![ClauseLabel::Eventive; y.len()];
        for f in 0..inner_k {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let model = train_svc(&subset(x, &train), &subset(y, &train), config, options)?;
            for i in test {
                pred[i] = model.predict_one(&x[i]);
            }
        }
        let score = match selection {
            Selection::Accuracy => accuracy(&pred, y),
            Selection::F1 => macro_f1(&pred, y),
        };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, *config));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub kappa_mod: f64,
    pub chosen_configs: Vec<SvcConfig>,
    pub folds: Vec<usize>,
    pub predictions: Vec<ClauseLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedCvOptions {
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub selection: Selection,
    pub smo: SmoOptions,
}

impl Default for NestedCvOptions {
    fn default() -> Self {
        NestedCvOptions {
            outer_k: 10,
            inner_k: 5,
            seed: 0,
            selection: Selection::Accuracy,
            smo: SmoOptions::default(),
        }
    }
}

/// Outer stratified folds score held-out rows; inside each, a stratified
/// inner CV picks the grid point that is then refit on the outer-train rows.
pub fn nested_cv(
    x: &[Vec<f64>],
    y: &[ClauseLabel],
    grid: &[SvcConfig],
    options: &NestedCvOptions,
) -> Result<NestedCvReport> {
    if grid.is_empty() {
        return Err(Error::invalid("empty SVC grid"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    let folds = stratified_folds(y, options.outer_k, options.seed)?;
    let run = |f: usize| -> Result<(SvcConfig, Vec<(usize, ClauseLabel)>)> {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let (tx, ty) = (subset(x, &train), subset(y, &train));
        let inner_seed = substream(options.seed, 1 + f as u64).next_u64();
        let config = select_config(
            &tx,
            &ty,
            grid,
            options.inner_k,
            inner_seed,
            options.selection,
            &options.smo,
        )?;
        let model = train_svc(&tx, &ty, &config, &options.smo)?;
        let held: Vec<(usize, ClauseLabel)> = (0..y.len())
            .filter(|&i| folds[i] == f)
            .map(|i| (i, model.predict_one(&x[i])))
            .collect();
        Ok((config, held))
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<_>> = {
        use rayon::prelude::*;
        (0..options.outer_k).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<_>> = (0..options.outer_k).map(run).collect();

    let mut predictions = vec![ClauseLabel::Eventive; y.len()];
    let mut chosen_configs = Vec::with_capacity(options.outer_k);
    for outcome in outcomes {
        let (config, held) = outcome?;
        chosen_configs.push(config);
        for (i, label) in held {
            predictions[i] = label;
        }
    }
    Ok(NestedCvReport {
        per_class: class_metrics(&predictions, y),
        macro_f1: macro_f1(&predictions, y),
        accuracy: accuracy(&predictions, y),
        kappa_mod: cohen_kappa(&predictions, y)?,
        chosen_configs,
        folds,
        predictions,
    })
}

/// Rows of six score columns followed by a gold label. A first line whose
/// leading field is not a number is taken as a header.
pub fn parse_ontology_tsv<R: BufRead>(reader: R) -> Result<(Vec<Vec<f64>>, Vec<ClauseLabel>)> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && fields[0].trim().parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 7 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 columns, found {}", fields.len()),
            ));
        }
        let row: Vec<f64> = fields[..6]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("`{f}` is not a finite number")))
            })
            .collect::<Result<_>>()?;
        let label = fields[6]
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        x.push(row);
        y.push(label);
    }
    Ok((x, y))
}
