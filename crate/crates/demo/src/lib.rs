//! Browser bindings: ridit scores for a rating history, simulated chance
//! agreement, and κ as a function of the confidence product.

use genlab_core::agreement::{expected_agreement_bootstrap, kappa};
use genlab_core::annotations::ridit_scores;
use genlab_core::math::logistic;
use wasm_bindgen::prelude::*;

/// Ridit score of each confidence level 1..=5; `NaN` for levels never used.
pub fn ridit_levels(confidences: &[u8]) -> Result<Vec<f64>, String> {
    let table = ridit_scores(confidences).map_err(|e| e.to_string())?;
    Ok((1..=5u8).map(|c| table.get(&c).copied().unwrap_or(f64::NAN)).collect())
}

/// κ at `points` evenly spaced confidence products in `[0, 1]`, for an
/// average annotator pair with agreement log-odds `beta0 + beta_conf · c`.
pub fn kappa_points(beta0: f64, beta_conf: f64, p_e: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least 2 points".into());
    }
    (0..points)
        .map(|i| {
            let c = i as f64 / (points - 1) as f64;
            kappa(logistic(beta0 + beta_conf * c), p_e).map_err(|e| e.to_string())
        })
        .collect()
}

#[wasm_bindgen]
pub fn ridit(confidences: &[u8]) -> Result<Vec<f64>, JsError> {
    ridit_levels(confidences).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = expectedAgreement)]
pub fn expected_agreement(beta0: f64, sigma_ann: f64, reps: usize, seed: u32) -> Result<f64, JsError> {
    expected_agreement_bootstrap(beta0, sigma_ann, reps, u64::from(seed)).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = kappaCurve)]
pub fn kappa_curve(beta0: f64, beta_conf: f64, p_e: f64, points: usize) -> Result<Vec<f64>, JsError> {
    kappa_points(beta0, beta_conf, p_e, points).map_err(|e| JsError::new(&e))
}
