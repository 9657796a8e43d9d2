//! Chance agreement from annotator bias estimates and confidence-conditioned κ.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationDataset, Property};
use crate::glmm::{fit_agreement_glmm, fit_logistic_glmm, GlmmFit, GlmmOptions, GlmmSpec, GroupingFactor, PairEffects};
use crate::math::{logistic, normal_quantile, open_unit, substream};
use crate::{Error, Result};

pub const DEFAULT_REPS: usize = 9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub annotator_a: String,
    pub annotator_b: String,
    pub item_id: String,
    pub property: Property,
    pub agree: bool,
    pub conf_product: f64,
}

/// One row per unordered annotator pair per shared `(item, property)`.
///
/// Rows are ordered by item, then property, then annotator pair.
pub fn pairwise_agreement_table(dataset: &AnnotationDataset) -> Result<Vec<PairRow>> {
    // (annotator, polarity, ridit confidence) per (item, property).
    type Group<'a> = Vec<(&'a str, bool, f64)>;
    let mut groups: BTreeMap<(&str, Property), Group<'_>> = BTreeMap::new();
    for r in &dataset.records {
        let conf = r.ridit_conf.ok_or_else(|| {
            Error::invalid(format!(
                "ridit confidence missing (annotator {}, item {})",
                r.annotator_id, r.item_id
            ))
        })?;
        groups
            .entry((r.item_id.as_str(), r.property))
            .or_default()
            .push((r.annotator_id.as_str(), r.polarity, conf));
    }
    let mut rows = Vec::new();
    for ((item, property), mut members) in groups {
        members.sort_by(|a, b| a.0.cmp(b.0));
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, pa, ca) = members[i];
                let (b, pb, cb) = members[j];
                rows.push(PairRow {
                    annotator_a: a.to_string(),
                    annotator_b: b.to_string(),
                    item_id: item.to_string(),
                    property,
                    agree: pa == pb,
                    conf_product: ca * cb,
                });
            }
        }
    }
    Ok(rows)
}

/// Parametric-bootstrap chance agreement between two annotators whose biases
/// are drawn independently from `N(beta0, sigma_ann)`.
pub fn expected_agreement_bootstrap(beta0: f64, sigma_ann: f64, reps: usize, seed: u64) -> Result<f64> {
    expected_agreement_bootstrap_with(beta0, sigma_ann, None, reps, seed)
}

/// As [`expected_agreement_bootstrap`], optionally adding an item effect
/// `N(0, sigma_item)` shared by both annotators of a replicate.
pub fn expected_agreement_bootstrap_with(
    beta0: f64,
    sigma_ann: f64,
    sigma_item: Option<f64>,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let negative = |s: f64| s.is_nan() || s < 0.0;
    if negative(sigma_ann) || sigma_item.is_some_and(negative) {
        return Err(Error::invalid("bootstrap standard deviations must be nonnegative"));
    }
    if reps == 0 {
        return Err(Error::invalid("bootstrap needs at least one replicate"));
    }
    let replicate = |r: usize| -> f64 {
        let mut rng = substream(seed, r as u64);
        let b1 = beta0 + sigma_ann * normal_quantile(open_unit(rng.next_u64()));
        let b2 = beta0 + sigma_ann * normal_quantile(open_unit(rng.next_u64()));
        let shared = match sigma_item {
            Some(s) => s * normal_quantile(open_unit(rng.next_u64())),
            None => 0.0,
        };
        let (p1, p2) = (logistic(b1 + shared), logistic(b2 + shared));
        p1 * p2 + (1.0 - p1) * (1.0 - p2)
    };
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        (0..reps).into_par_iter().map(replicate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = (0..reps).map(replicate).collect();
    // Summation order is fixed, so the result does not depend on scheduling.
    Ok(values.iter().sum::<f64>() / reps as f64)
}

/// Agreement probability for the average annotator pair at confidence product `c`.
pub fn observed_agreement_at(fit: &GlmmFit, conf_product: f64) -> f64 {
    let b0 = fit.beta.first().copied().unwrap_or(0.0);
    let bc = fit.beta.get(1).copied().unwrap_or(0.0);
    logistic(b0 + bc * conf_product)
}

/// `(p_o − p_e) / (1 − p_e)`.
pub fn kappa(p_o: f64, p_e: f64) -> Result<f64> {
    if p_e >= 1.0 {
        return Err(Error::Undefined("κ with expected agreement 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fleiss' κ from an items × categories count table (equal raters per item).
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64> {
    let raters: usize = counts
        .first()
        .map(|r| r.iter().sum())
        .ok_or_else(|| Error::invalid("empty count table"))?;
    if raters < 2 || counts.iter().any(|r| r.iter().sum::<usize>() != raters) {
        return Err(Error::invalid(
            "Fleiss' κ needs a constant number (≥ 2) of raters per item",
        ));
    }
    let n_items = counts.len() as f64;
    let k = counts[0].len();
    let m = raters as f64;
    let mut p_j = vec![0.0; k];
    let mut p_bar = 0.0;
    for row in counts {
        let mut agree = 0.0;
        for (j, &c) in row.iter().enumerate() {
            p_j[j] += c as f64 / (n_items * m);
            agree += (c * c.saturating_sub(1)) as f64;
        }
        p_bar += agree / (m * (m - 1.0)) / n_items;
    }
    let p_e: f64 = p_j.iter().map(|p| p * p).sum();
    kappa(p_bar, p_e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub reps: usize,
    pub seed: u64,
    pub pair_effects: PairEffects,
    /// Integrate a shared item effect into the chance-agreement bootstrap.
    pub include_item_variance: bool,
    pub glmm: GlmmOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            reps: DEFAULT_REPS,
            seed: 0,
            pair_effects: PairEffects::PerAnnotator,
            include_item_variance: false,
            glmm: GlmmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub property: Property,
    pub p_e: f64,
    pub kappa_low: f64,
    pub kappa_high: f64,
    pub n_pairs: usize,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub beta0: f64,
    pub sigma_ann: f64,
    pub sigma_item: f64,
    pub beta_conf: f64,
    pub p_o_low: f64,
    pub p_o_high: f64,
    pub bias_fit: GlmmFit,
    pub agreement_fit: GlmmFit,
}

/// Fits the bias model on raw polarities and the agreement model on pairwise
/// agreement, then reports chance agreement and κ at confidence products 0 and 1.
pub fn agreement_report(
    dataset: &AnnotationDataset,
    property: Property,
    options: &ReportOptions,
) -> Result<AgreementReport> {
    let records: Vec<_> = dataset.for_property(property).collect();
    if records.is_empty() {
        return Err(Error::invalid(format!("no responses for {property}")));
    }
    let n = records.len();
    let annotators: Vec<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
    let items: Vec<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
    let bias_spec = GlmmSpec {
        outcome: records.iter().map(|r| r.polarity).collect(),
        fixed_design: DMatrix::from_element(n, 1, 1.0),
        fixed_names: vec!["intercept".into()],
        grouping_factors: vec![
            GroupingFactor::from_labels("annotator", &annotators),
            GroupingFactor::from_labels("item", &items),
        ],
    };
    let bias_fit = fit_logistic_glmm(&bias_spec, &options.glmm)?;
    let beta0 = bias_fit.beta[0];
    let sigma_ann = bias_fit.sigma["annotator"];
    let sigma_item = bias_fit.sigma["item"];
    let p_e = expected_agreement_bootstrap_with(
        beta0,
        sigma_ann,
        options.include_item_variance.then_some(sigma_item),
        options.reps,
        options.seed,
    )?;

    let pairs: Vec<PairRow> = pairwise_agreement_table(dataset)?
        .into_iter()
        .filter(|r| r.property == property)
        .collect();
    if pairs.is_empty() {
        return Err(Error::invalid(format!("no overlapping annotations for {property}")));
    }
    let agree: Vec<bool> = pairs.iter().map(|r| r.agree).collect();
    let conf: Vec<f64> = pairs.iter().map(|r| r.conf_product).collect();
    let pair_ids: Vec<(&str, &str)> = pairs
        .iter()
        .map(|r| (r.annotator_a.as_str(), r.annotator_b.as_str()))
        .collect();
    let pair_items: Vec<&str> = pairs.iter().map(|r| r.item_id.as_str()).collect();
    let agreement_fit = fit_agreement_glmm(
        &agree,
        &conf,
        &pair_ids.iter().map(|&(a, b)| (a, b)).collect::<Vec<_>>(),
        &pair_items,
        options.pair_effects,
        &options.glmm,
    )?;
    let p_o_low = observed_agreement_at(&agreement_fit, 0.0);
    let p_o_high = observed_agreement_at(&agreement_fit, 1.0);
    Ok(AgreementReport {
        property,
        p_e,
        kappa_low: kappa(p_o_low, p_e)?,
        kappa_high: kappa(p_o_high, p_e)?,
        n_pairs: pairs.len(),
        bootstrap_reps: options.reps,
        seed: options.seed,
        beta0,
        sigma_ann,
        sigma_item,
        beta_conf: agreement_fit.beta[1],
        p_o_low,
        p_o_high,
        bias_fit,
        agreement_fit,
    })
}

/// Plain-text table with columns property, p_e, κ_low, κ_high.
pub fn format_table(reports: &[AgreementReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>6} {:>8} {:>8}", "Property", "p_e", "κ_low", "κ_high");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16} {:>6.2} {:>8.2} {:>8.2}",
            r.property.name(),
            r.p_e,
            r.kappa_low,
            r.kappa_high
        );
    }
    out
}
