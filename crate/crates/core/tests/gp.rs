use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use padloop_core::gp::kernel::gram;
use padloop_core::gp::laplace::predictive_variance;
use padloop_core::gp::perf::{cv_mse, log_grid_edges};
use padloop_core::gp::{
    fit_perf_gp, laplace_marginal, qot_posterior, rbf_kernel, GpRegressor, KernelParams, PadPosterior,
    PerfGpConfig, PerfGpModel,
};
use padloop_core::ExecMode;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn points(r: &mut ChaCha8Rng, m: usize, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, d, |_, _| r.random_range(lo..hi))
}

/// Conditional of the last coordinate of a joint Gaussian, from its precision.
fn condition_last(cov: &DMatrix<f64>, y: &[f64]) -> (f64, f64) {
    let n = cov.nrows() - 1;
    let prec = cov.clone().try_inverse().unwrap();
    let mean = -(0..n).map(|i| prec[(n, i)] * y[i]).sum::<f64>() / prec[(n, n)];
    (mean, 1.0 / prec[(n, n)])
}

fn joint_cov(x: &DMatrix<f64>, q: &[f64], k: &KernelParams) -> DMatrix<f64> {
    let m = x.nrows();
    let row = |i: usize| -> Vec<f64> { x.row(i).iter().copied().collect() };
    DMatrix::from_fn(m + 1, m + 1, |i, j| {
        let a = if i < m { row(i) } else { q.to_vec() };
        let b = if j < m { row(j) } else { q.to_vec() };
        let noise = if i == j && i < m { k.noise_var } else { 0.0 };
        rbf_kernel(&a, &b, k).unwrap() + noise
    })
}

#[test]
fn rbf_closed_form() {
    let k = KernelParams::new(2.0, 0.5, 0.0).unwrap();
    let v = rbf_kernel(&[1.0, 2.0], &[2.0, 0.0], &k).unwrap();
    assert!((v - 2.0 * (-5.0f64).exp()).abs() < 1e-15);
    assert!(rbf_kernel(&[1.0], &[1.0, 2.0], &k).is_err());
}

#[test]
fn laplace_density_integrates_to_one() {
    let mut r = rng(11);
    for _ in 0..5 {
        let x = points(&mut r, 8, 3, 1.0, 9.0);
        let q: Vec<f64> = (0..8).map(|_| r.random_range(0.2..1.0)).collect();
        let model = PerfGpModel::with_kernel(&x, &q, KernelParams::new(0.05, 2.0, 0.01).unwrap()).unwrap();
        let pad = PadPosterior {
            mean: std::array::from_fn(|_| r.random_range(2.0..8.0)),
            var: std::array::from_fn(|_| r.random_range(0.1..1.0)),
        };
        let (mu, var) = predictive_variance(&model, &pad).unwrap();
        let sd = var.sqrt();
        let (lo, hi, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 20_000);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            total += w * laplace_marginal(lo + i as f64 * h, &pad, &model).unwrap();
        }
        total *= h / 3.0;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}

#[test]
fn grid_search_stays_inside_published_ranges() {
    let mut r = rng(12);
    let x = points(&mut r, 40, 3, 1.0, 9.0);
    let q: Vec<f64> = (0..40).map(|i| 0.5 + 0.1 * (x[(i, 0)] - 5.0) / 4.0).collect();
    let cfg = PerfGpConfig::default();
    let (model, report) = fit_perf_gp(&x, &q, &cfg, ExecMode::Sequential).unwrap();
    for a in &report.alpha_grid {
        assert!(*a > 0.01 && *a < 0.1);
    }
    for b in &report.beta_grid {
        assert!(*b > 1.0 && *b < 3.0);
    }
    let k = model.kernel();
    assert_eq!(k.alpha, report.alpha_grid[report.best.0]);
    assert_eq!(k.beta, report.beta_grid[report.best.1]);
}

#[test]
fn grid_search_recovers_the_generating_cell() {
    // A zero-mean draw is not a valid QoT set, so the cross-validated grid is
    // scored directly.
    let mut r = rng(13);
    let truth = KernelParams::new(0.05, 2.0, 1e-4).unwrap();
    let m = 300;
    let x = points(&mut r, m, 3, 1.0, 9.0);
    let mut k = gram(&x, &truth);
    for i in 0..m {
        k[(i, i)] += truth.noise_var;
    }
    let chol = k.cholesky().unwrap();
    let z = DVector::from_fn(m, |_, _| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (chol.l() * z).iter().copied().collect();
    let cfg = PerfGpConfig {
        grid_size: 4,
        noise_var: truth.noise_var,
        ..PerfGpConfig::default()
    };
    let (alphas, betas) = (cfg.alpha_grid(), cfg.beta_grid());
    let mut best = (f64::INFINITY, 0, 0);
    for (i, a) in alphas.iter().enumerate() {
        for (j, b) in betas.iter().enumerate() {
            let err = cv_mse(&x, &y, KernelParams::new(*a, *b, cfg.noise_var).unwrap(), &cfg).unwrap();
            if err < best.0 {
                best = (err, i, j);
            }
        }
    }
    let ae = log_grid_edges(cfg.alpha_range.0, cfg.alpha_range.1, cfg.grid_size);
    let be = log_grid_edges(cfg.beta_range.0, cfg.beta_range.1, cfg.grid_size);
    let cell_a = (0..cfg.grid_size).find(|&i| ae[i] <= 0.05 && 0.05 < ae[i + 1]).unwrap();
    let cell_b = (0..cfg.grid_size).find(|&j| be[j] <= 2.0 && 2.0 < be[j + 1]).unwrap();
    assert_eq!((best.1, best.2), (cell_a, cell_b), "alpha {:?} beta {:?}", alphas, betas);
}

#[test]
fn plug_in_qot_posterior_uses_the_pad_mean() {
    let mut r = rng(14);
    let x = points(&mut r, 6, 3, 1.0, 9.0);
    let q: Vec<f64> = (0..6).map(|_| r.random_range(0.2..1.0)).collect();
    let model = PerfGpModel::with_kernel(&x, &q, KernelParams::new(0.05, 2.0, 0.01).unwrap()).unwrap();
    let a = PadPosterior {
        mean: [4.0, 5.0, 6.0],
        var: [0.1, 0.2, 0.3],
    };
    let b = PadPosterior { var: [2.0; 3], ..a };
    assert_eq!(qot_posterior(&model, &a).unwrap(), qot_posterior(&model, &b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn regressor_matches_joint_conditioning(
        seed in any::<u64>(),
        m in 1usize..=10,
        d in 1usize..5,
        alpha in 0.1f64..5.0,
        beta in 0.05f64..4.0,
        noise in 0.01f64..1.0,
    ) {
        let mut r = rng(seed);
        let k = KernelParams::new(alpha, beta, noise).unwrap();
        let x = points(&mut r, m, d, 0.0, 2.0);
        let y: Vec<f64> = (0..m).map(|_| r.random_range(-3.0..3.0)).collect();
        let q: Vec<f64> = (0..d).map(|_| r.random_range(-0.5..2.5)).collect();
        let gp = GpRegressor::fit(x.clone(), DVector::from_vec(y.clone()), k).unwrap();
        let (mean, var) = gp.predict(&q).unwrap();
        let (om, ov) = condition_last(&joint_cov(&x, &q, &k), &y);
        prop_assert!((mean - om).abs() < 1e-10, "{} vs {}", mean, om);
        prop_assert!((var - ov).abs() < 1e-10, "{} vs {}", var, ov);
        prop_assert!(var >= 0.0 && var <= alpha + 1e-10);
    }

    #[test]
    fn extra_training_point_never_raises_variance(seed in any::<u64>(), m in 1usize..9) {
        let mut r = rng(seed);
        let k = KernelParams::new(r.random_range(0.1..3.0), r.random_range(0.1..2.0), r.random_range(0.01..0.5)).unwrap();
        let x = points(&mut r, m + 1, 3, 0.0, 3.0);
        let y: Vec<f64> = (0..=m).map(|_| r.random_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..3).map(|_| r.random_range(0.0..3.0)).collect();
        let small = GpRegressor::fit(x.rows(0, m).into_owned(), DVector::from_column_slice(&y[..m]), k).unwrap();
        let big = GpRegressor::fit(x, DVector::from_vec(y), k).unwrap();
        prop_assert!(big.predict(&q).unwrap().1 <= small.predict(&q).unwrap().1 + 1e-12);
    }
}
