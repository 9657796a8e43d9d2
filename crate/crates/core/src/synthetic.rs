//! Simulators for the generative models behind the bias, agreement and
//! normalization fits. Used for recovery checks and demos.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::{AnnotationDataset, Property, ResponseRecord, Split};
use crate::glmm::{GlmmSpec, GroupingFactor};
use crate::math::{logistic, normal_quantile, open_unit};

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    normal_quantile(open_unit(rng.random()))
}

/// Binary responses from `logit P(true) = β₀ + a_annotator + u_item`, with each
/// annotator rating `per_annotator` distinct random items.
pub fn bias_spec(
    seed: u64,
    beta0: f64,
    sigma_ann: f64,
    sigma_item: f64,
    n_annotators: usize,
    n_items: usize,
    per_annotator: usize,
) -> GlmmSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ann: Vec<f64> = (0..n_annotators).map(|_| sigma_ann * std_normal(&mut rng)).collect();
    let item: Vec<f64> = (0..n_items).map(|_| sigma_item * std_normal(&mut rng)).collect();
    let mut ann_labels = Vec::new();
    let mut item_labels = Vec::new();
    let mut outcome = Vec::new();
    let mut order: Vec<usize> = (0..n_items).collect();
    for (a, &ann_eff) in ann.iter().enumerate() {
        for k in 0..per_annotator.min(n_items) {
            let j = rng.random_range(k..n_items);
            order.swap(k, j);
            let it = order[k];
            outcome.push(rng.random::<f64>() < logistic(beta0 + ann_eff + item[it]));
            ann_labels.push(format!("a{a:04}"));
            item_labels.push(format!("i{it:04}"));
        }
    }
    let n = outcome.len();
    GlmmSpec {
        outcome,
        fixed_design: DMatrix::from_element(n, 1, 1.0),
        fixed_names: vec!["intercept".into()],
        grouping_factors: vec![
            GroupingFactor::from_labels("annotator", &ann_labels),
            GroupingFactor::from_labels("item", &item_labels),
        ],
    }
}

/// Pairwise agreement rows from `logit P(agree) = β₀ + β_conf·c + a_i + a_j + u_item`
/// with `c ~ U(0, 1)`.
pub struct AgreementSample {
    pub agree: Vec<bool>,
    pub conf_products: Vec<f64>,
    pub pairs: Vec<(String, String)>,
    pub items: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn agreement_rows(
    seed: u64,
    beta0: f64,
    beta_conf: f64,
    sigma_ann: f64,
    sigma_item: f64,
    n_annotators: usize,
    n_items: usize,
    raters_per_item: usize,
) -> AgreementSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ann: Vec<f64> = (0..n_annotators).map(|_| sigma_ann * std_normal(&mut rng)).collect();
    let mut out = AgreementSample {
        agree: Vec::new(),
        conf_products: Vec::new(),
        pairs: Vec::new(),
        items: Vec::new(),
    };
    let mut order: Vec<usize> = (0..n_annotators).collect();
    for it in 0..n_items {
        let u = sigma_item * std_normal(&mut rng);
        for k in 0..raters_per_item.min(n_annotators) {
            let j = rng.random_range(k..n_annotators);
            order.swap(k, j);
        }
        let raters = &order[..raters_per_item.min(n_annotators)];
        for x in 0..raters.len() {
            for y in x + 1..raters.len() {
                let (a, b) = (raters[x].min(raters[y]), raters[x].max(raters[y]));
                let c: f64 = rng.random();
                let p = logistic(beta0 + beta_conf * c + ann[a] + ann[b] + u);
                out.agree.push(rng.random::<f64>() < p);
                out.conf_products.push(c);
                out.pairs.push((format!("a{a:04}"), format!("a{b:04}")));
                out.items.push(format!("i{it:04}"));
            }
        }
    }
    out
}

/// How a simulated annotator's accuracy depends on their confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reliability {
    /// Accuracy rises linearly from 0.5 at confidence 1 to `max` at 5.
    ConfidenceDriven { max: f64 },
    /// Accuracy `p` regardless of confidence.
    Flat(f64),
    /// Every annotator copies the latent label at full confidence.
    Perfect,
}

/// Responses on one property: each item has a latent binary label, each
/// annotator a bias on the log-odds scale, and the chance of reporting the
/// latent label follows `reliability`. Confidence is uniform on 1..5.
pub fn response_dataset(
    seed: u64,
    property: Property,
    n_annotators: usize,
    n_items: usize,
    raters_per_item: usize,
    sigma_bias: f64,
    reliability: Reliability,
) -> AnnotationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias: Vec<f64> = (0..n_annotators).map(|_| sigma_bias * std_normal(&mut rng)).collect();
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..n_annotators).collect();
    for it in 0..n_items {
        let latent = rng.random::<bool>();
        for k in 0..raters_per_item.min(n_annotators) {
            let j = rng.random_range(k..n_annotators);
            order.swap(k, j);
        }
        for &a in &order[..raters_per_item.min(n_annotators)] {
            let (confidence, accuracy) = match reliability {
                Reliability::Perfect => (5u8, 1.0),
                Reliability::Flat(p) => (rng.random_range(1..=5u8), p),
                Reliability::ConfidenceDriven { max } => {
                    let c = rng.random_range(1..=5u8);
                    (c, 0.5 + (max - 0.5) * f64::from(c - 1) / 4.0)
                }
            };
            let correct = rng.random::<f64>() < accuracy;
            // Biased annotators flip a share of their answers toward their preferred side.
            let biased = rng.random::<f64>() < (logistic(bias[a]) - 0.5).abs();
            let polarity = if reliability == Reliability::Perfect {
                latent
            } else if biased {
                bias[a] > 0.0
            } else {
                latent == correct
            };
            records.push(ResponseRecord {
                annotator_id: format!("a{a:04}"),
                item_id: format!("i{it:04}"),
                property,
                polarity,
                confidence,
                ridit_conf: None,
            });
        }
    }
    AnnotationDataset::new(records, Split::Dev).expect("simulated records are unique")
}
