use genlab_core::agreement::{expected_agreement_bootstrap, kappa};
use genlab_core::glmm::{fit_logistic_glmm, GlmmOptions};
use genlab_core::math::spearman;
use genlab_core::synthetic::bias_spec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn kappa_strictly_increasing_in_observed(p_e in 0.0f64..0.99, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kappa(lo, p_e).unwrap() < kappa(hi, p_e).unwrap());
    }

    #[test]
    fn chance_agreement_never_below_half(beta0 in -4.0f64..4.0, sigma in 0.0f64..3.0, seed in 0u64..1000) {
        let reps = 999;
        let p_e = expected_agreement_bootstrap(beta0, sigma, reps, seed).unwrap();
        // Each replicate lies in [0, 1], so 0.5/√reps bounds the standard error.
        let stderr = 0.5 / (reps as f64).sqrt();
        prop_assert!(p_e >= 0.5 - 3.0 * stderr, "p_e {}", p_e);
    }
}

#[test]
fn bootstrap_is_bit_identical_for_a_seed() {
    let a = expected_agreement_bootstrap(-0.31, 1.23, 9999, 42).unwrap();
    let b = expected_agreement_bootstrap(-0.31, 1.23, 9999, 42).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn annotator_sigma_estimate_tracks_the_truth() {
    let truths = [0.1, 0.4, 0.8, 1.2, 1.6];
    for seed in 0..10 {
        let estimates: Vec<f64> = truths
            .iter()
            .map(|&s| {
                let spec = bias_spec(seed * 31 + 7, 0.5, s, 0.7, 80, 60, 25);
                fit_logistic_glmm(&spec, &GlmmOptions::default()).unwrap().sigma["annotator"]
            })
            .collect();
        let rho = spearman(&truths, &estimates).unwrap();
        assert!(rho > 0.9, "seed {seed}: estimates {estimates:?}");
    }
}
