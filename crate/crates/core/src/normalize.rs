//! Bias-corrected real-valued labels from polarity + ridit confidence.
//!
//! Each response `i` by annotator `a` on item `t` and property `p` contributes
//! the hinge loss `max(0, c_i − y_i (s_{t,p} + a_{a,p}))`, where `y = ±1` is
//! the polarity and `c` the ridit confidence. Annotator effects carry the
//! Gaussian penalty `a²/(2σ_p²)`, token effects a small ridge `ε s²`.
//!
//! For fixed `σ` the problem is a box-constrained quadratic program, solved
//! exactly by dual coordinate descent; `σ_p²` is then re-estimated as the mean
//! squared annotator effect and the two steps alternate.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationDataset, Property};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    pub ridge_eps: f64,
    /// Stop the inner solve when every projected dual gradient is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub sigma_tol: f64,
    pub max_rounds: usize,
    pub init_sigma: f64,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            ridge_eps: 1e-6,
            tol: 1e-9,
            max_sweeps: 200_000,
            sigma_tol: 1e-4,
            max_rounds: 50,
            init_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub item_id: String,
    pub property: Property,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationFit {
    /// Token × property fixed effects, sorted by item then property.
    pub token_scores: Vec<NormalizedScore>,
    pub annotator_intercepts: BTreeMap<String, BTreeMap<Property, f64>>,
    /// Mean token effect per property.
    pub property_offsets: BTreeMap<Property, f64>,
    pub re_sigma: BTreeMap<Property, f64>,
    pub ridge_eps: f64,
    pub rounds: usize,
    pub converged: bool,
}

struct Problem {
    /// (token index, annotator index, y, c)
    rows: Vec<(usize, usize, f64, f64)>,
    tokens: Vec<(String, Property)>,
    annotators: Vec<(String, Property)>,
}

fn build(dataset: &AnnotationDataset) -> Result<Problem> {
    if dataset.records.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let mut token_index: HashMap<(String, Property), usize> = HashMap::new();
    let mut ann_index: HashMap<(String, Property), usize> = HashMap::new();
    let mut tokens = Vec::new();
    let mut annotators = Vec::new();
    let mut rows = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        let c = r
            .ridit_conf
            .ok_or_else(|| Error::invalid(format!("ridit confidence missing for item {}", r.item_id)))?;
        if !c.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite ridit confidence for item {}",
                r.item_id
            )));
        }
        let tk = (r.item_id.clone(), r.property);
        let t = *token_index.entry(tk.clone()).or_insert_with(|| {
            tokens.push(tk);
            tokens.len() - 1
        });
        let ak = (r.annotator_id.clone(), r.property);
        let a = *ann_index.entry(ak.clone()).or_insert_with(|| {
            annotators.push(ak);
            annotators.len() - 1
        });
        rows.push((t, a, if r.polarity { 1.0 } else { -1.0 }, c));
    }
    Ok(Problem {
        rows,
        tokens,
        annotators,
    })
}

/// Fits token and annotator effects; see the module docs for the objective.
pub fn fit_normalization(dataset: &AnnotationDataset, options: &NormalizeOptions) -> Result<NormalizationFit> {
    let problem = build(dataset)?;
    let n = problem.rows.len();
    let token_var = 1.0 / (2.0 * options.ridge_eps);
    let properties: Vec<Property> = {
        let mut ps: Vec<Property> = problem.annotators.iter().map(|a| a.1).collect();
        ps.sort();
        ps.dedup();
        ps
    };
    let mut sigma2: BTreeMap<Property, f64> = properties
        .iter()
        .map(|&p| (p, options.init_sigma * options.init_sigma))
        .collect();

    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); problem.tokens.len()];
    for (i, row) in problem.rows.iter().enumerate() {
        blocks[row.0].push(i);
    }
    let mut alpha = vec![0.0; n];
    let mut s = vec![0.0; problem.tokens.len()];
    let mut a = vec![0.0; problem.annotators.len()];
    let mut rounds = 0;
    let mut converged = false;
    let mut scratch = Vec::new();
    let mut block_alpha = Vec::new();

    while rounds < options.max_rounds {
        rounds += 1;
        let ann_var: Vec<f64> = problem
            .annotators
            .iter()
            .map(|(_, p)| sigma2[p].max(MIN_VARIANCE))
            .collect();
        // Primal point implied by the (warm-started) dual variables.
        s.iter_mut().for_each(|v| *v = 0.0);
        a.iter_mut().for_each(|v| *v = 0.0);
        for (i, &(t, m, y, _)) in problem.rows.iter().enumerate() {
            s[t] += alpha[i] * y * token_var;
            a[m] += alpha[i] * y * ann_var[m];
        }
        for _ in 0..options.max_sweeps {
            let mut max_pg: f64 = 0.0;
            let mut max_step: f64 = 0.0;
            for (t, block) in blocks.iter().enumerate() {
                for &i in block {
                    let (_, m, y, c) = problem.rows[i];
                    max_pg = max_pg.max(projected_gradient(y * (s[t] + a[m]) - c, alpha[i]).abs());
                }
                // Rows of one token share a property, hence one annotator variance.
                let var = ann_var[problem.rows[block[0]].1];
                let y0 = problem.rows[block[0]].2;
                scratch.clear();
                for &i in block {
                    let (_, m, y, c) = problem.rows[i];
                    // Linear term excluding this row's own contribution to a_m.
                    let h = y * a[m] - var * alpha[i];
                    scratch.push((y0 * y, c - h));
                }
                let w = solve_token_block(&scratch, token_var, var, &mut block_alpha);
                for (k, &i) in block.iter().enumerate() {
                    let new = block_alpha[k];
                    let (_, m, y, _) = problem.rows[i];
                    max_step = max_step.max((new - alpha[i]).abs());
                    a[m] += (new - alpha[i]) * y * ann_var[m];
                    alpha[i] = new;
                }
                s[t] = y0 * w;
            }
            // The gradient carries rounding of order K·ε, so a sweep that no
            // longer moves the duals is as converged as it will get.
            if max_pg < options.tol || max_step < f64::EPSILON {
                break;
            }
        }

        let mut change: f64 = 0.0;
        for &p in &properties {
            let effects: Vec<f64> = problem
                .annotators
                .iter()
                .zip(&a)
                .filter(|((_, q), _)| *q == p)
                .map(|(_, v)| *v)
                .collect();
            let new = effects.iter().map(|v| v * v).sum::<f64>() / effects.len() as f64;
            change = change.max((new.sqrt() - sigma2[&p].sqrt()).abs());
            sigma2.insert(p, new);
        }
        if change < options.sigma_tol {
            converged = true;
            break;
        }
    }

    let mut token_scores: Vec<NormalizedScore> = problem
        .tokens
        .iter()
        .zip(&s)
        .map(|((item, p), &score)| NormalizedScore {
            item_id: item.clone(),
            property: *p,
            score,
        })
        .collect();
    token_scores.sort_by(|x, y| (&x.item_id, x.property).cmp(&(&y.item_id, y.property)));

    let mut annotator_intercepts: BTreeMap<String, BTreeMap<Property, f64>> = BTreeMap::new();
    for ((ann, p), &v) in problem.annotators.iter().zip(&a) {
        annotator_intercepts.entry(ann.clone()).or_default().insert(*p, v);
    }
    let mut property_offsets = BTreeMap::new();
    for &p in &properties {
        let vals: Vec<f64> = token_scores
            .iter()
            .filter(|t| t.property == p)
            .map(|t| t.score)
            .collect();
        property_offsets.insert(p, vals.iter().sum::<f64>() / vals.len() as f64);
    }
    Ok(NormalizationFit {
        token_scores,
        annotator_intercepts,
        property_offsets,
        re_sigma: sigma2.into_iter().map(|(p, v)| (p, v.sqrt())).collect(),
        ridge_eps: options.ridge_eps,
        rounds,
        converged,
    })
}

const MIN_VARIANCE: f64 = 1e-12;

fn projected_gradient(g: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= 1.0 {
        g.max(0.0)
    } else {
        g
    }
}

/// Exact minimizer of `½K(ỹᵀα)² + ½v‖α‖² − bᵀα` over the unit box; returns
/// `w = K ỹᵀα` alongside `alpha`.
///
/// Stationarity gives `α_i = clip((b_i − ỹ_i w)/v, 0, 1)` where `w/K = ỹᵀα`,
/// a strictly decreasing piecewise-linear fixed point in `w`. Working in `w`
/// keeps the breakpoints `ỹ_i b_i` and `ỹ_i (b_i − v)` exact, so the active
/// set is found reliably even when `v ≪ K`. The caller should take the token
/// score from `w` rather than from `K ỹᵀα`, which amplifies rounding in `α`.
fn solve_token_block(rows: &[(f64, f64)], k: f64, v: f64, alpha: &mut Vec<f64>) -> f64 {
    let at = |w: f64, (yt, b): (f64, f64)| ((b - yt * w) / v).clamp(0.0, 1.0);
    let g = |w: f64| rows.iter().map(|&r| r.0 * at(w, r)).sum::<f64>() - w / k;
    // Free interval of each row, with the value of α on either side.
    let span = |(yt, b): (f64, f64)| -> (f64, f64, f64, f64) {
        if yt > 0.0 {
            (b - v, b, 1.0, 0.0)
        } else {
            (-b, v - b, 0.0, 1.0)
        }
    };
    let mut breaks: Vec<f64> = rows
        .iter()
        .flat_map(|&r| {
            let (lo, hi, _, _) = span(r);
            [lo, hi]
        })
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // The piece (left, right) between consecutive breakpoints holding the root.
    let (left, right) = if g(breaks[0]) <= 0.0 {
        (f64::NEG_INFINITY, breaks[0])
    } else if g(breaks[breaks.len() - 1]) >= 0.0 {
        (breaks[breaks.len() - 1], f64::INFINITY)
    } else {
        let j = breaks.iter().position(|&x| g(x) <= 0.0).expect("g changes sign");
        (breaks[j - 1], breaks[j])
    };

    alpha.clear();
    let mut bound = 0.0;
    let mut free = 0.0;
    let mut free_b = 0.0;
    for &r in rows {
        let (lo, hi, below, above) = span(r);
        if right <= lo {
            alpha.push(below);
            bound += r.0 * below;
        } else if left >= hi {
            alpha.push(above);
            bound += r.0 * above;
        } else {
            alpha.push(f64::NAN);
            free += 1.0;
            free_b += r.0 * r.1;
        }
    }
    // On the piece: bound + (free_b − free·w)/v = w/K.
    let w = ((v * bound + free_b) * k / (free * k + v)).clamp(left, right);
    for (a, &r) in alpha.iter_mut().zip(rows) {
        if a.is_nan() {
            *a = at(w, r);
        }
    }
    w
}

/// Scores for the average annotator: token effects with annotator effects zeroed.
pub fn score_items(fit: &NormalizationFit) -> Vec<NormalizedScore> {
    fit.token_scores.clone()
}

/// Wide table: one row per item, one column per property (`NA` when absent).
pub fn to_wide_tsv(scores: &[NormalizedScore], properties: &[Property]) -> String {
    let mut rows: BTreeMap<&str, BTreeMap<Property, f64>> = BTreeMap::new();
    for s in scores {
        rows.entry(&s.item_id).or_default().insert(s.property, s.score);
    }
    let mut out = String::from("item_id");
    for p in properties {
        out.push('\t');
        out.push_str(p.name());
    }
    out.push('\n');
    for (item, vals) in rows {
        if !properties.iter().any(|p| vals.contains_key(p)) {
            continue;
        }
        out.push_str(item);
        for p in properties {
            match vals.get(p) {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed wide table: property columns and per-item rows (`NaN` for `NA`).
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub properties: Vec<Property>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn parse_wide_tsv(text: &str) -> Result<WideTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("item_id") {
        return Err(Error::parse(1, "first column must be item_id"));
    }
    let properties = cols.map(|c| c.parse()).collect::<Result<Vec<Property>>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != properties.len() + 1 {
            return Err(Error::parse(
                i + 1,
                format!("expected {} columns", properties.len() + 1),
            ));
        }
        let vals = fields[1..]
            .iter()
            .map(|f| {
                if *f == "NA" {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(i + 1, format!("bad number `{f}`")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((fields[0].to_string(), vals));
    }
    Ok(WideTable { properties, rows })
}
