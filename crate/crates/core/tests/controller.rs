use proptest::prelude::*;

use padloop_core::controller::{
    controller_step, defuzzify, fuzzy_infer, gate, ControllerConfig, OutputLabel, NULL_STIMULUS_ID,
};
use padloop_core::gp::QotPosterior;

fn strongest_label(tau: &[f64; 6]) -> usize {
    (0..6).rev().find(|&l| tau[l] > 0.0).unwrap_or(0)
}

#[test]
fn worse_error_never_weakens_the_rule_output() {
    let cfg = ControllerConfig::default();
    for dj in 0..=40 {
        let delta = -0.6 + 1.2 * dj as f64 / 40.0;
        let pi = cfg.delta_partition.fuzzify(delta);
        let mut prev = 0;
        for ei in 0..=80 {
            // Walk from good to bad performance.
            let eps = 1.2 - 2.4 * ei as f64 / 80.0;
            let tau = fuzzy_infer(&cfg.error_partition.fuzzify(eps), &pi, &cfg.rules);
            let label = strongest_label(&tau);
            assert!(label >= prev, "eps {eps} delta {delta}: {label} < {prev}");
            prev = label;
        }
    }
}

#[test]
fn deeply_negative_inputs_pick_a_large_action() {
    let cfg = ControllerConfig::default();
    let tau = fuzzy_infer(
        &cfg.error_partition.fuzzify(-3.0),
        &cfg.delta_partition.fuzzify(-1.0),
        &cfg.rules,
    );
    let label = OutputLabel::ALL[strongest_label(&tau)];
    assert!(matches!(label, OutputLabel::L | OutputLabel::LL), "{label}");
}

#[test]
fn gate_threshold_is_strict() {
    let cfg = ControllerConfig::default();
    assert_eq!(gate(cfg.beta_r, &cfg), 0);
    assert_eq!(gate(cfg.beta_r - 1e-12, &cfg), 1);
    assert_eq!(gate(1.0, &cfg), 0);
}

#[test]
fn controller_step_is_pure() {
    let cfg = ControllerConfig::default();
    let post = QotPosterior { mean: 0.2, var: 0.01 };
    let a = controller_step(&post, Some(0.1), &cfg).unwrap();
    let b = controller_step(&post, Some(0.1), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(controller_step(&QotPosterior { mean: f64::NAN, var: 0.1 }, None, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn centroid_stays_between_active_centres(tau in prop::array::uniform6(0.0f64..1.0), zero_mask in prop::array::uniform6(any::<bool>())) {
        let cfg = ControllerConfig::default();
        let tau: [f64; 6] = std::array::from_fn(|l| if zero_mask[l] { 0.0 } else { tau[l] });
        let u = defuzzify(&tau, &cfg.centers);
        let active: Vec<usize> = (1..6).filter(|&l| tau[l] > 0.0).collect();
        if active.is_empty() {
            prop_assert_eq!(u, [0.0; 3]);
        } else {
            for d in 0..3 {
                let lo = active.iter().map(|&l| cfg.centers[l][d]).fold(f64::INFINITY, f64::min);
                let hi = active.iter().map(|&l| cfg.centers[l][d]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(u[d] >= lo - 1e-12 && u[d] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn good_and_improving_means_no_stimulus(q in 0.0f64..5.0, var in 0.0f64..1.0, lift in 0.0f64..2.0) {
        let cfg = ControllerConfig::default();
        let q = cfg.q_r * cfg.beta_r + q;
        let eps = q / cfg.q_r - cfg.beta_r;
        let step = controller_step(&QotPosterior { mean: q, var }, Some(eps - lift), &cfg).unwrap();
        prop_assert!(step.eps >= 0.0 && step.delta >= -1e-12);
        prop_assert_eq!(step.action.stimulus_id, NULL_STIMULUS_ID);
    }

    #[test]
    fn closed_gate_means_null_stimulus(q in 0.0f64..2.0, var in 0.0f64..0.5, prev in -2.0f64..2.0) {
        let cfg = ControllerConfig::default();
        let step = controller_step(&QotPosterior { mean: q, var }, Some(prev), &cfg).unwrap();
        if step.action.gate == 0 {
            prop_assert_eq!(step.action.stimulus_id, NULL_STIMULUS_ID);
        }
    }
}
