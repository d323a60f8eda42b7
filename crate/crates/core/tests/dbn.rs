use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use padloop_core::dbn::finetune::loo_loss;
use padloop_core::dbn::{
    fine_tune, free_energy_ratio, loo_loss_and_grad, pretrain_dbn, DbnParams, FineTuneData, RbmLayer, RbmVelocity,
    TrainConfig,
};
use padloop_core::gp::KernelParams;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_data(r: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| r.random_range(0.0..1.0))
}

#[test]
fn positive_phase_matches_enumeration_over_all_sixteen_states() {
    let mut r = rng(1);
    let mut layer = RbmLayer::zeros(2, 2);
    layer.weights = DMatrix::from_row_slice(2, 2, &[0.7, -1.3, 0.4, 2.1]);
    layer.visible_bias = DVector::from_vec(vec![0.2, -0.5]);
    layer.hidden_bias = DVector::from_vec(vec![-0.3, 0.9]);
    let data = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);

    // Joint weights over (v, h) restricted to the observed v give p(h | v).
    let mut expect = DMatrix::zeros(2, 2);
    for row in data.row_iter() {
        let mut z = 0.0;
        let mut acc = DMatrix::zeros(2, 2);
        for code in 0..16u32 {
            let bits: Vec<f64> = (0..4).map(|b| f64::from((code >> b) & 1)).collect();
            let (v, h) = ([bits[0], bits[1]], [bits[2], bits[3]]);
            if v != [row[0], row[1]] {
                continue;
            }
            let mut e = 0.0;
            for i in 0..2 {
                e += layer.visible_bias[i] * v[i] + layer.hidden_bias[i] * h[i];
                for j in 0..2 {
                    e += v[i] * layer.weights[(i, j)] * h[j];
                }
            }
            let w = e.exp();
            z += w;
            for i in 0..2 {
                for j in 0..2 {
                    acc[(i, j)] += w * v[i] * h[j];
                }
            }
        }
        expect += acc / (z * data.nrows() as f64);
    }
    let (pos, vis, _) = layer.positive_statistics(&data);
    assert!((pos - &expect).abs().max() < 1e-12);
    assert!((vis - DVector::from_vec(vec![0.5, 0.5])).abs().max() < 1e-15);

    let cfg = TrainConfig::default();
    let mut vel = RbmVelocity::zeros_like(&layer);
    let stats = layer.clone().cd1_update(&mut vel, &data, 0.01, &cfg, &mut r).unwrap();
    assert!((stats.positive - expect).abs().max() < 1e-12);
}

#[test]
fn reconstruction_improves_with_training() {
    let data = DMatrix::from_row_slice(4, 4, &[1., 1., 0., 0., 0., 0., 1., 1., 1., 0., 1., 0., 0., 1., 0., 1.]);
    let mut r = rng(2);
    let mut layer = RbmLayer::random(4, 3, 0.01, &mut r);
    let mut vel = RbmVelocity::zeros_like(&layer);
    let cfg = TrainConfig::default();
    let first = layer.cd1_update(&mut vel, &data, 0.1, &cfg, &mut r).unwrap().recon_error;
    for _ in 1..200 {
        layer.cd1_update(&mut vel, &data, 0.1, &cfg, &mut r).unwrap();
    }
    assert!(layer.reconstruction_error(&data) < first);
}

#[test]
fn cd1_rejects_shape_mismatch() {
    let mut r = rng(3);
    let mut layer = RbmLayer::random(4, 3, 0.1, &mut r);
    let mut vel = RbmVelocity::zeros_like(&layer);
    let bad = DMatrix::zeros(2, 5);
    assert!(layer.cd1_update(&mut vel, &bad, 0.1, &TrainConfig::default(), &mut r).is_err());
}

#[test]
fn published_architectures_build() {
    let mut r = rng(4);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    for arch in [vec![14, 20, 20, 20, 20], vec![56, 80, 80, 80, 80]] {
        let data = unit_data(&mut r, 30, arch[0]);
        let dbn = pretrain_dbn(&data, &arch, &cfg).unwrap();
        assert_eq!(dbn.layers.len(), 4);
        assert_eq!(dbn.architecture, arch);
        dbn.validate().unwrap();
    }
}

#[test]
fn pretraining_is_reproducible() {
    let mut r = rng(5);
    let data = unit_data(&mut r, 40, 6);
    let cfg = TrainConfig {
        epochs: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = pretrain_dbn(&data, &[6, 5, 4], &cfg).unwrap();
    let b = pretrain_dbn(&data, &[6, 5, 4], &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn free_energy_ratio_is_near_one_for_fresh_data() {
    let mut r = rng(6);
    let train = unit_data(&mut r, 200, 8);
    let held = unit_data(&mut r, 200, 8);
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let dbn = pretrain_dbn(&train, &[8, 6, 4], &cfg).unwrap();
    let ratio = free_energy_ratio(&dbn, &train, &held).unwrap();
    assert!((0.8..=1.25).contains(&ratio), "{ratio}");
}

fn toy_problem(seed: u64) -> (DbnParams, Vec<KernelParams>, DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let mut dbn = DbnParams::init(&[4, 3, 3], 1.0, seed).unwrap();
    for layer in &mut dbn.layers {
        layer.hidden_bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
    }
    let x = unit_data(&mut r, 5, 4);
    let y = DMatrix::from_fn(5, 3, |_, _| r.random_range(1.0..9.0));
    let kernels = (0..3)
        .map(|_| KernelParams::new(r.random_range(0.5..2.0), r.random_range(0.05..0.5), 0.1).unwrap())
        .collect();
    (dbn, kernels, x, y)
}

#[test]
fn weight_gradients_match_central_differences() {
    let (dbn, kernels, x, y) = toy_problem(7);
    let (_, grad) = loo_loss_and_grad(&dbn, &kernels, &x, &y).unwrap();
    let h = 1e-5;
    for k in 0..dbn.layers.len() {
        let (rows, cols) = dbn.layers[k].weights.shape();
        for i in 0..rows {
            for j in 0..cols {
                let at = |d: f64| {
                    let mut p = dbn.clone();
                    p.layers[k].weights[(i, j)] += d;
                    loo_loss(&p, &kernels, &x, &y).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let g = grad.layers[k].0[(i, j)];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "layer {k} ({i},{j}): {g} vs {fd}");
            }
        }
    }
}

#[test]
fn fine_tuning_lowers_training_loss() {
    let (dbn, kernels, x, y) = toy_problem(8);
    let cfg = TrainConfig {
        finetune_epochs: 50,
        ..TrainConfig::default()
    };
    let data = FineTuneData {
        train_x: x,
        train_y: y,
        validation: None,
    };
    let (_, _, report) = fine_tune(&dbn, &kernels, &data, &cfg).unwrap();
    assert!(report.final_train_loss <= report.initial_train_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_stays_inside_unit_interval(seed in any::<u64>(), scale in 0.01f64..20.0) {
        let dbn = DbnParams::init(&[5, 4, 3], scale, seed).unwrap();
        let mut r = rng(seed);
        let x = DMatrix::from_fn(7, 5, |_, _| r.random_range(-3.0..3.0));
        let out = dbn.forward_batch(&x).unwrap();
        prop_assert!(out.iter().all(|v| *v >= 0.0 && *v <= 1.0 && v.is_finite()));
    }
}
