//! Logistic mixed models with crossed random intercepts.
//!
//! Random effects use the spherical parametrization `u = σ v`, `v ~ N(0, I)`.
//! For fixed `(β, log σ)` the conditional mode `v̂` is found by damped Newton
//! iterations, and the negative Laplace log-likelihood
//!
//! `f(β, θ) = Σ_i [log(1 + e^η_i) − y_i η_i] + ½ v̂ᵀv̂ + ½ log|AᵀWA + I|`
//!
//! (with `η = Xβ + A v̂`, `A = ZΛ`) is minimized over `(β, θ = log σ)` by a
//! box-constrained BFGS using the exact gradient of `f`, including the
//! dependence of `v̂` and of the log-determinant on the parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::math::{log1p_exp, logistic};
use crate::{Error, Result};

const SIGMA_MIN: f64 = 1e-4;
const SIGMA_MAX: f64 = 50.0;

/// One grouping factor. Each observation belongs to one level, or to two for
/// dyadic factors (both members' intercepts enter the linear predictor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingFactor {
    pub name: String,
    pub level_labels: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

impl GroupingFactor {
    /// Builds a factor from per-observation labels; levels are sorted by label.
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let levels: BTreeSet<&str> = labels.iter().map(|s| s.as_ref()).collect();
        let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        GroupingFactor {
            name: name.to_string(),
            level_labels: levels.iter().map(|s| s.to_string()).collect(),
            members: labels.iter().map(|s| vec![index[s.as_ref()]]).collect(),
        }
    }

    /// Builds a dyadic factor from per-observation label pairs.
    pub fn dyadic<S: AsRef<str>>(name: &str, pairs: &[(S, S)]) -> Self {
        let levels: BTreeSet<&str> = pairs.iter().flat_map(|(a, b)| [a.as_ref(), b.as_ref()]).collect();
        let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        GroupingFactor {
            name: name.to_string(),
            level_labels: levels.iter().map(|s| s.to_string()).collect(),
            members: pairs
                .iter()
                .map(|(a, b)| vec![index[a.as_ref()], index[b.as_ref()]])
                .collect(),
        }
    }

    pub fn n_levels(&self) -> usize {
        self.level_labels.len()
    }
}

#[derive(Debug, Clone)]
pub struct GlmmSpec {
    pub outcome: Vec<bool>,
    /// `n × p` fixed-effect design, intercept column included.
    pub fixed_design: DMatrix<f64>,
    pub fixed_names: Vec<String>,
    pub grouping_factors: Vec<GroupingFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub beta_cap: f64,
    pub init_sigma: f64,
    /// Factors whose standard deviation is held fixed (0 removes the factor).
    pub fixed_sigma: BTreeMap<String, f64>,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        GlmmOptions {
            tol: 1e-6,
            max_iter: 200,
            beta_cap: 15.0,
            init_sigma: 1.0,
            fixed_sigma: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub beta_names: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma: BTreeMap<String, f64>,
    /// Conditional modes of the random intercepts on the log-odds scale.
    pub re_modes: BTreeMap<String, Vec<f64>>,
    pub re_levels: BTreeMap<String, Vec<String>>,
    pub converged: bool,
    pub separation: bool,
    pub iterations: usize,
    pub loglik_laplace: f64,
}

impl GlmmFit {
    pub fn beta_named(&self, name: &str) -> Option<f64> {
        self.beta_names.iter().position(|n| n == name).map(|i| self.beta[i])
    }
}

/// Random-effect levels to add when predicting, as `(factor, level index)`.
pub type ReSelection<'a> = &'a [(&'a str, usize)];

/// Inverse-logit of `fixed_row · β` plus the selected random-effect modes
/// (none selected = the average annotator and item).
pub fn predict_prob(fit: &GlmmFit, fixed_row: &[f64], re_levels: ReSelection<'_>) -> Result<f64> {
    if fixed_row.len() != fit.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.beta.len(),
            got: fixed_row.len(),
        });
    }
    let mut eta: f64 = fixed_row.iter().zip(&fit.beta).map(|(x, b)| x * b).sum();
    for &(factor, level) in re_levels {
        let mode = fit
            .re_modes
            .get(factor)
            .and_then(|m| m.get(level))
            .ok_or_else(|| Error::invalid(format!("no random effect {factor}[{level}]")))?;
        eta += mode;
    }
    Ok(logistic(eta))
}

/// Fits a Bernoulli-logit model with crossed random intercepts by Laplace approximation.
pub fn fit_logistic_glmm(spec: &GlmmSpec, options: &GlmmOptions) -> Result<GlmmFit> {
    validate_shapes(spec)?;
    let n = spec.outcome.len();
    let p = spec.fixed_design.ncols();
    let y: Vec<f64> = spec.outcome.iter().map(|&b| f64::from(u8::from(b))).collect();

    // A constant outcome is completely separated whatever the design.
    let all_same = spec.outcome.iter().all(|&b| b == spec.outcome[0]);
    let intercept = (0..p).find(|&k| spec.fixed_design.column(k).iter().all(|&v| v == 1.0));
    if let (true, Some(k)) = (all_same, intercept) {
        return Ok(degenerate_fit(spec, options, k, n));
    }
    validate_rank(&spec.fixed_design)?;

    let mut problem = LaplaceProblem::new(spec, &y, options);
    let beta0 = plain_logistic(&spec.fixed_design, &y, options.beta_cap, 100);
    let mut x0: Vec<f64> = beta0;
    for _ in &problem.free {
        x0.push(options.init_sigma.clamp(SIGMA_MIN, SIGMA_MAX).ln());
    }
    let mut lower = vec![-options.beta_cap; p];
    let mut upper = vec![options.beta_cap; p];
    lower.extend(problem.free.iter().map(|_| SIGMA_MIN.ln()));
    upper.extend(problem.free.iter().map(|_| SIGMA_MAX.ln()));

    let outcome = minimize_box_bfgs(
        |x, grad| problem.evaluate(x, grad),
        x0,
        &lower,
        &upper,
        options.tol,
        options.max_iter,
    );
    let x = outcome.x;
    // Re-evaluate at the solution so the cached modes belong to it.
    let value = problem.evaluate(&x, None);

    let separation = x[..p].iter().any(|b| b.abs() >= options.beta_cap * (1.0 - 1e-9));
    let lambda = problem.lambda_at(&x[p..]);
    let mut sigma = BTreeMap::new();
    let mut re_modes = BTreeMap::new();
    let mut re_levels = BTreeMap::new();
    for (fi, f) in spec.grouping_factors.iter().enumerate() {
        let off = problem.offsets[fi];
        let s = lambda[fi];
        sigma.insert(f.name.clone(), if s <= SIGMA_MIN * (1.0 + 1e-9) { 0.0 } else { s });
        re_modes.insert(
            f.name.clone(),
            (0..f.n_levels()).map(|l| s * problem.v[off + l]).collect(),
        );
        re_levels.insert(f.name.clone(), f.level_labels.clone());
    }
    Ok(GlmmFit {
        beta_names: spec.fixed_names.clone(),
        beta: x[..p].to_vec(),
        sigma,
        re_modes,
        re_levels,
        converged: outcome.converged,
        separation,
        iterations: outcome.iterations,
        loglik_laplace: -value,
    })
}

/// How the agreement model assigns annotator random intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairEffects {
    /// One intercept per annotator; a pair contributes the sum of both.
    #[default]
    PerAnnotator,
    /// One intercept per unordered annotator pair.
    PerPair,
}

/// Agreement model: `logit P(agree) = β₀ + β_conf · conf_product` with random
/// intercepts for annotators and items.
pub fn fit_agreement_glmm<S: AsRef<str>>(
    agreements: &[bool],
    confidence_products: &[f64],
    annotator_pairs: &[(S, S)],
    item_ids: &[S],
    pair_effects: PairEffects,
    options: &GlmmOptions,
) -> Result<GlmmFit> {
    let n = agreements.len();
    if confidence_products.len() != n || annotator_pairs.len() != n || item_ids.len() != n {
        return Err(Error::invalid("agreement inputs have different lengths"));
    }
    if let Some(c) = confidence_products.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::invalid(format!("confidence product {c} outside [0, 1]")));
    }
    let mut design = DMatrix::from_element(n, 2, 1.0);
    for (i, &c) in confidence_products.iter().enumerate() {
        design[(i, 1)] = c;
    }
    let annotator_factor = match pair_effects {
        PairEffects::PerAnnotator => GroupingFactor::dyadic("annotator", annotator_pairs),
        PairEffects::PerPair => {
            let labels: Vec<String> = annotator_pairs
                .iter()
                .map(|(a, b)| {
                    let (a, b) = (a.as_ref(), b.as_ref());
                    if a <= b {
                        format!("{a}|{b}")
                    } else {
                        format!("{b}|{a}")
                    }
                })
                .collect();
            GroupingFactor::from_labels("annotator", &labels)
        }
    };
    let spec = GlmmSpec {
        outcome: agreements.to_vec(),
        fixed_design: design,
        fixed_names: vec!["intercept".into(), "conf".into()],
        grouping_factors: vec![annotator_factor, GroupingFactor::from_labels("item", item_ids)],
    };
    fit_logistic_glmm(&spec, options)
}

fn validate_rank(x: &DMatrix<f64>) -> Result<()> {
    let sv = x.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "smallest singular value {smin:.3e} vs largest {smax:.3e}"
        )));
    }
    Ok(())
}

fn validate_shapes(spec: &GlmmSpec) -> Result<()> {
    let n = spec.outcome.len();
    let x = &spec.fixed_design;
    if x.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.nrows(),
        });
    }
    if spec.fixed_names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: spec.fixed_names.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in fixed design"));
    }
    if n < x.ncols() || x.ncols() == 0 {
        return Err(Error::RankDeficient(format!(
            "{n} observations for {} fixed effects",
            x.ncols()
        )));
    }
    for f in &spec.grouping_factors {
        if f.members.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.members.len(),
            });
        }
        if f.n_levels() < 2 {
            return Err(Error::invalid(format!(
                "grouping factor `{}` needs at least 2 levels",
                f.name
            )));
        }
        let mut used = vec![false; f.n_levels()];
        for m in &f.members {
            for &l in m {
                *used
                    .get_mut(l)
                    .ok_or_else(|| Error::invalid(format!("level {l} out of range in `{}`", f.name)))? = true;
            }
        }
        if let Some(l) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!(
                "level `{}` of `{}` has no observations",
                f.level_labels[l], f.name
            )));
        }
    }
    Ok(())
}

fn degenerate_fit(spec: &GlmmSpec, options: &GlmmOptions, intercept: usize, n: usize) -> GlmmFit {
    let sign = if spec.outcome[0] { 1.0 } else { -1.0 };
    let mut beta = vec![0.0; spec.fixed_design.ncols()];
    beta[intercept] = sign * options.beta_cap;
    let eta = beta[intercept];
    let nll = n as f64 * (log1p_exp(eta) - if spec.outcome[0] { eta } else { 0.0 });
    GlmmFit {
        beta_names: spec.fixed_names.clone(),
        beta,
        sigma: spec.grouping_factors.iter().map(|f| (f.name.clone(), 0.0)).collect(),
        re_modes: spec
            .grouping_factors
            .iter()
            .map(|f| (f.name.clone(), vec![0.0; f.n_levels()]))
            .collect(),
        re_levels: spec
            .grouping_factors
            .iter()
            .map(|f| (f.name.clone(), f.level_labels.clone()))
            .collect(),
        converged: true,
        separation: true,
        iterations: 0,
        loglik_laplace: -nll,
    }
}

/// Newton-Raphson logistic regression with coefficients clamped to `±cap`.
pub(crate) fn plain_logistic(x: &DMatrix<f64>, y: &[f64], cap: f64, max_iter: usize) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let mu = logistic(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let row = x.row(i);
            for a in 0..p {
                grad[a] += (y[i] - mu) * row[a];
                for b in 0..p {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        beta += &step;
        beta.apply(|b| *b = b.clamp(-cap, cap));
        if step.amax() < 1e-12 {
            break;
        }
    }
    beta.iter().copied().collect()
}

/// The Laplace objective for one model, with warm-started conditional modes.
struct LaplaceProblem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    /// Sparse rows of Z: (column, multiplicity, factor).
    rows: Vec<Vec<(usize, f64, usize)>>,
    offsets: Vec<usize>,
    col_factor: Vec<usize>,
    /// Factor index for each free θ component.
    free: Vec<usize>,
    fixed: Vec<Option<f64>>,
    q: usize,
    /// Factor whose Hessian block is diagonal and is eliminated first.
    eliminated: Option<usize>,
    v: Vec<f64>,
}

struct ModeState {
    mu: Vec<f64>,
    w: Vec<f64>,
    factor: HessFactor,
    h_value: f64,
}

/// Position of a random-effect column within a [`HessFactor`].
#[derive(Clone, Copy)]
enum Slot {
    Dense(usize),
    Diag(usize),
}

/// Diagonal block of H belonging to a factor with at most one level per row.
struct Elimination {
    start: usize,
    len: usize,
    d: Vec<f64>,
    /// Off-diagonal coupling per eliminated level: (dense index, value).
    b: Vec<Vec<(usize, f64)>>,
}

/// Factorization of H = AᵀWA + I, using a Schur complement when one factor
/// contributes a diagonal block.
struct HessFactor {
    elim: Option<Elimination>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Entries of H⁻¹ needed by the gradient.
enum HessInverse<'a> {
    Dense(DMatrix<f64>),
    Schur {
        elim: &'a Elimination,
        s_inv: DMatrix<f64>,
        /// S⁻¹ b_d for every eliminated level d, one column each.
        m: DMatrix<f64>,
    },
}

impl HessFactor {
    fn dense_index(&self, c: usize) -> Slot {
        match &self.elim {
            None => Slot::Dense(c),
            Some(e) if c < e.start => Slot::Dense(c),
            Some(e) if c < e.start + e.len => Slot::Diag(c - e.start),
            Some(e) => Slot::Dense(c - e.len),
        }
    }

    fn logdet(&self) -> f64 {
        let dense: f64 = self.chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        dense + self.elim.as_ref().map_or(0.0, |e| e.d.iter().map(|d| d.ln()).sum())
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let Some(e) = &self.elim else {
            return self.chol.solve(rhs);
        };
        let q = rhs.len();
        let m = q - e.len;
        let mut r1 = DVector::zeros(m);
        for c in 0..q {
            if let Slot::Dense(j) = self.dense_index(c) {
                r1[j] = rhs[c];
            }
        }
        for (k, col) in e.b.iter().enumerate() {
            let scale = rhs[e.start + k] / e.d[k];
            for &(j, v) in col {
                r1[j] -= v * scale;
            }
        }
        let x1 = self.chol.solve(&r1);
        let mut out = DVector::zeros(q);
        for c in 0..q {
            match self.dense_index(c) {
                Slot::Dense(j) => out[c] = x1[j],
                Slot::Diag(k) => {
                    let dot: f64 = e.b[k].iter().map(|&(j, v)| v * x1[j]).sum();
                    out[c] = (rhs[c] - dot) / e.d[k];
                }
            }
        }
        out
    }

    fn inverse(&self) -> HessInverse<'_> {
        let s_inv = self.chol.inverse();
        let Some(e) = &self.elim else {
            return HessInverse::Dense(s_inv);
        };
        let mut b = DMatrix::zeros(s_inv.nrows(), e.len);
        for (k, col) in e.b.iter().enumerate() {
            for &(j, v) in col {
                b[(j, k)] = v;
            }
        }
        let m = &s_inv * b;
        HessInverse::Schur { elim: e, s_inv, m }
    }
}

impl HessInverse<'_> {
    fn entry(&self, factor: &HessFactor, c1: usize, c2: usize) -> f64 {
        match self {
            HessInverse::Dense(h) => h[(c1, c2)],
            HessInverse::Schur { elim, s_inv, m } => match (factor.dense_index(c1), factor.dense_index(c2)) {
                (Slot::Dense(i), Slot::Dense(j)) => s_inv[(i, j)],
                (Slot::Dense(j), Slot::Diag(k)) | (Slot::Diag(k), Slot::Dense(j)) => -m[(j, k)] / elim.d[k],
                (Slot::Diag(k1), Slot::Diag(k2)) => {
                    let dot: f64 = elim.b[k1].iter().map(|&(j, v)| v * m[(j, k2)]).sum();
                    let diag = if k1 == k2 { 1.0 / elim.d[k1] } else { 0.0 };
                    diag + dot / (elim.d[k1] * elim.d[k2])
                }
            },
        }
    }
}

impl<'a> LaplaceProblem<'a> {
    fn new(spec: &'a GlmmSpec, y: &'a [f64], options: &GlmmOptions) -> Self {
        let mut offsets = Vec::new();
        let mut col_factor = Vec::new();
        let mut q = 0;
        for (fi, f) in spec.grouping_factors.iter().enumerate() {
            offsets.push(q);
            q += f.n_levels();
            col_factor.extend(std::iter::repeat_n(fi, f.n_levels()));
        }
        let rows: Vec<Vec<(usize, f64, usize)>> = (0..y.len())
            .map(|i| {
                let mut row: Vec<(usize, f64, usize)> = Vec::new();
                for (fi, f) in spec.grouping_factors.iter().enumerate() {
                    for &l in &f.members[i] {
                        let col = offsets[fi] + l;
                        match row.iter_mut().find(|e| e.0 == col) {
                            Some(e) => e.1 += 1.0,
                            None => row.push((col, 1.0, fi)),
                        }
                    }
                }
                row
            })
            .collect();
        let fixed: Vec<Option<f64>> = spec
            .grouping_factors
            .iter()
            .map(|f| options.fixed_sigma.get(&f.name).copied())
            .collect();
        let free = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
        let eliminated = (0..spec.grouping_factors.len())
            .filter(|&fi| {
                rows.iter()
                    .all(|row: &Vec<(usize, f64, usize)>| row.iter().filter(|e| e.2 == fi).count() <= 1)
            })
            .max_by_key(|&fi| spec.grouping_factors[fi].n_levels());
        LaplaceProblem {
            x: &spec.fixed_design,
            y,
            rows,
            offsets,
            col_factor,
            free,
            fixed,
            q,
            eliminated,
            v: vec![0.0; q],
        }
    }

    fn lambda_at(&self, theta: &[f64]) -> Vec<f64> {
        let mut lambda: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &fi) in self.free.iter().enumerate() {
            lambda[fi] = theta[k].exp();
        }
        lambda
    }

    fn eta(&self, fixed_eta: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(fixed_eta)
            .map(|(row, &e)| e + row.iter().map(|&(c, z, f)| z * lambda[f] * v[c]).sum::<f64>())
            .collect()
    }

    fn inner_value(&self, eta: &[f64], v: &[f64]) -> f64 {
        let nll: f64 = eta.iter().zip(self.y).map(|(&e, &y)| log1p_exp(e) - y * e).sum();
        nll + 0.5 * v.iter().map(|a| a * a).sum::<f64>()
    }

    /// Newton iterations for the conditional mode; leaves `self.v` at the mode.
    fn find_mode(&mut self, fixed_eta: &[f64], lambda: &[f64]) -> ModeState {
        let mut v = std::mem::take(&mut self.v);
        let mut eta = self.eta(fixed_eta, lambda, &v);
        let mut h_value = self.inner_value(&eta, &v);
        for _ in 0..100 {
            let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
            let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
            let mut grad = DVector::from_column_slice(&v);
            for (i, row) in self.rows.iter().enumerate() {
                let r = mu[i] - self.y[i];
                for &(c, z, f) in row {
                    grad[c] += r * z * lambda[f];
                }
            }
            let factor = self.factorize(&w, lambda);
            if grad.amax() < 1e-10 {
                self.v = v;
                return ModeState { mu, w, factor, h_value };
            }
            let step = factor.solve(&grad);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let cand_eta = self.eta(fixed_eta, lambda, &cand);
                let cand_value = self.inner_value(&cand_eta, &cand);
                if cand_value <= h_value + 1e-12 * h_value.abs() || t < 1e-8 {
                    v = cand;
                    eta = cand_eta;
                    h_value = cand_value;
                    break;
                }
                t *= 0.5;
            }
        }
        let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let factor = self.factorize(&w, lambda);
        self.v = v;
        ModeState { mu, w, factor, h_value }
    }

    fn factorize(&self, w: &[f64], lambda: &[f64]) -> HessFactor {
        let elim = self.eliminated.map(|fi| Elimination {
            start: self.offsets[fi],
            len: self.col_factor.iter().filter(|&&f| f == fi).count(),
            d: Vec::new(),
            b: Vec::new(),
        });
        let mut factor = HessFactor {
            elim,
            chol: DMatrix::<f64>::identity(1, 1).cholesky().unwrap(),
        };
        let (m, len) = match &factor.elim {
            Some(e) => (self.q - e.len, e.len),
            None => (self.q, 0),
        };
        let mut h = DMatrix::identity(m, m);
        let mut d = vec![1.0; len];
        let mut b: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c1, z1, f1) in row {
                let a1 = z1 * lambda[f1];
                for &(c2, z2, f2) in row {
                    let value = w[i] * a1 * z2 * lambda[f2];
                    match (factor.dense_index(c1), factor.dense_index(c2)) {
                        (Slot::Dense(j1), Slot::Dense(j2)) => h[(j1, j2)] += value,
                        (Slot::Diag(k), Slot::Diag(_)) => d[k] += value,
                        (Slot::Dense(j), Slot::Diag(k)) => match b[k].iter_mut().find(|e| e.0 == j) {
                            Some(e) => e.1 += value,
                            None => b[k].push((j, value)),
                        },
                        (Slot::Diag(_), Slot::Dense(_)) => {}
                    }
                }
            }
        }
        for (k, col) in b.iter().enumerate() {
            for &(j1, v1) in col {
                for &(j2, v2) in col {
                    h[(j1, j2)] -= v1 * v2 / d[k];
                }
            }
        }
        if let Some(e) = &mut factor.elim {
            e.d = d;
            e.b = b;
        }
        factor.chol = h.cholesky().expect("AᵀWA + I is positive definite");
        factor
    }

    /// Objective value; fills `grad` with the exact gradient when requested.
    fn evaluate(&mut self, params: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let p = self.x.ncols();
        let beta = DVector::from_column_slice(&params[..p]);
        let lambda = self.lambda_at(&params[p..]);
        let fixed_eta: Vec<f64> = (self.x * &beta).iter().copied().collect();
        let state = self.find_mode(&fixed_eta, &lambda);
        let logdet = state.factor.logdet();
        let value = state.h_value + 0.5 * logdet;
        if let Some(grad) = grad {
            self.gradient(&state, &lambda, grad);
        }
        value
    }

    fn gradient(&self, state: &ModeState, lambda: &[f64], grad: &mut [f64]) {
        let n = self.y.len();
        let p = self.x.ncols();
        let hinv = state.factor.inverse();
        let hinv_at = |c1: usize, c2: usize| hinv.entry(&state.factor, c1, c2);
        let v = &self.v;
        let a = |c: usize, z: f64, f: usize| z * lambda[f] * if c < self.q { 1.0 } else { 0.0 };

        // Per-observation leverage-type quantities.
        let mut r = vec![0.0; n];
        let mut c_obs = vec![0.0; n];
        for i in 0..n {
            let row = &self.rows[i];
            let mut lev = 0.0;
            for &(c1, z1, f1) in row {
                for &(c2, z2, f2) in row {
                    lev += a(c1, z1, f1) * a(c2, z2, f2) * hinv_at(c1, c2);
                }
            }
            let mu = state.mu[i];
            r[i] = mu - self.y[i];
            c_obs[i] = 0.5 * state.w[i] * (1.0 - 2.0 * mu) * lev;
        }
        // t = H⁻¹ Aᵀ c
        let mut atc = DVector::zeros(self.q);
        for (row, &ci) in self.rows.iter().zip(&c_obs) {
            for &(col, z, f) in row {
                atc[col] += a(col, z, f) * ci;
            }
        }
        let t = state.factor.solve(&atc);
        let a_t: Vec<f64> = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(col, z, f)| a(col, z, f) * t[col]).sum())
            .collect();

        for (k, gk) in grad.iter_mut().enumerate().take(p) {
            *gk = (0..n)
                .map(|i| self.x[(i, k)] * (r[i] + c_obs[i] - state.w[i] * a_t[i]))
                .sum();
        }

        for (slot, &fi) in self.free.iter().enumerate() {
            let mut g = 0.0;
            for i in 0..n {
                let row = &self.rows[i];
                // (A_f v̂)_i and (A_f t)_i
                let mut af_v = 0.0;
                let mut af_t = 0.0;
                for &(col, z, f) in row {
                    if f == fi {
                        af_v += a(col, z, f) * v[col];
                        af_t += a(col, z, f) * t[col];
                    }
                }
                // tr(H⁻¹ Aᵀ W A_f) contribution of observation i.
                let mut direct = 0.0;
                for &(c1, z1, f1) in row {
                    for &(c2, z2, f2) in row {
                        if f2 == fi {
                            direct += a(c1, z1, f1) * a(c2, z2, f2) * hinv_at(c1, c2);
                        }
                    }
                }
                g += r[i] * af_v + state.w[i] * direct + c_obs[i] * af_v - r[i] * af_t - a_t[i] * state.w[i] * af_v;
            }
            grad[p + slot] = g;
        }
        debug_assert_eq!(self.col_factor.len(), self.q);
    }
}

pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Box-constrained BFGS with projected Armijo backtracking.
pub(crate) fn minimize_box_bfgs<F>(
    mut f: F,
    x0: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
) -> BfgsOutcome
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let m = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..m {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0;
    project(&mut x);
    let mut g = vec![0.0; m];
    let mut fx = f(&x, Some(&mut g));
    let mut hinv = DMatrix::<f64>::identity(m, m);
    let mut prev_active: Vec<bool> = vec![false; m];

    for iter in 0..max_iter {
        let active: Vec<bool> = (0..m)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        if active != prev_active {
            hinv = DMatrix::identity(m, m);
            prev_active = active.clone();
        }
        let pg: Vec<f64> = (0..m).map(|i| if active[i] { 0.0 } else { g[i] }).collect();
        if pg.iter().all(|v| v.abs() < 1e-8) {
            return BfgsOutcome {
                x,
                converged: true,
                iterations: iter,
            };
        }
        let pgv = DVector::from_column_slice(&pg);
        let mut d: Vec<f64> = (-(&hinv * &pgv)).iter().copied().collect();
        for i in 0..m {
            if active[i] {
                d[i] = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            hinv = DMatrix::identity(m, m);
            d = pg.iter().map(|v| -v).collect();
        }
        let dmax = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut step = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut cand);
            let decrease: f64 = cand.iter().zip(&x).zip(&g).map(|((c, a), gi)| (c - a) * gi).sum();
            let fc = f(&cand, None);
            if fc.is_finite() && fc <= fx + 1e-4 * decrease {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No progress possible along any descent direction at this precision.
            return BfgsOutcome {
                x,
                converged: pg.iter().all(|v| v.abs() < 1e-4),
                iterations: iter,
            };
        };
        let mut gc = vec![0.0; m];
        let fc2 = f(&cand, Some(&mut gc));
        debug_assert!((fc2 - fc).abs() <= 1e-6 * (1.0 + fc.abs()));
        let s: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let s = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&yv);
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(m, m);
            let left = &i - rho * &s * yv.transpose();
            let right = &i - rho * &yv * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        let max_change = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        x = cand;
        fx = fc2;
        g = gc;
        if max_change < tol {
            return BfgsOutcome {
                x,
                converged: true,
                iterations: iter + 1,
            };
        }
    }
    BfgsOutcome {
        x,
        converged: false,
        iterations: max_iter,
    }
}
