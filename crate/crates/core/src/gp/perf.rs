//! Phase II: performance (QoT) posterior from PAD means, with hyperparameters
//! chosen by repeated k-fold cross-validated grid search.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::kernel::KernelParams;
use super::pad::{PadPosterior, PAD_DIMS};
use super::regressor::GpRegressor;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QotPosterior {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerfGpConfig {
    /// Open interval for the signal variance.
    pub alpha_range: (f64, f64),
    /// Open interval for the squared length scale.
    pub beta_range: (f64, f64),
    pub grid_size: usize,
    pub folds: usize,
    pub repeats: usize,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for PerfGpConfig {
    fn default() -> Self {
        Self {
            alpha_range: (0.01, 0.1),
            beta_range: (1.0, 3.0),
            grid_size: 10,
            folds: 5,
            repeats: 3,
            noise_var: 0.01,
            seed: 0,
        }
    }
}

/// Centres of `n` equal cells on a log scale; always strictly inside `(lo, hi)`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (i as f64 + 0.5) * (b - a) / n as f64).exp())
        .collect()
}

/// Edges of the cells whose centres [`log_grid`] returns.
pub fn log_grid_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=n).map(|i| (a + i as f64 * (b - a) / n as f64).exp()).collect()
}

impl PerfGpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
        if !ok_range(self.alpha_range) || !ok_range(self.beta_range) {
            return Err(Error::invalid("grid ranges must satisfy 0 < lo < hi"));
        }
        if self.grid_size == 0 || self.folds < 2 || self.repeats == 0 {
            return Err(Error::invalid("grid_size >= 1, folds >= 2, repeats >= 1 required"));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::invalid("noise_var must be >= 0"));
        }
        Ok(())
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        log_grid(self.alpha_range.0, self.alpha_range.1, self.grid_size)
    }

    pub fn beta_grid(&self) -> Vec<f64> {
        log_grid(self.beta_range.0, self.beta_range.1, self.grid_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// `cv_mse[i][j]` for `alpha_grid[i]`, `beta_grid[j]`; infinite when the
    /// cell could not be fitted.
    pub cv_mse: Vec<Vec<f64>>,
    pub best: (usize, usize),
    pub best_cv_mse: f64,
}

#[derive(Debug, Clone)]
pub struct PerfGpModel {
    gp: GpRegressor,
}

impl PerfGpModel {
    /// Conditions the performance GP with fixed hyperparameters.
    pub fn with_kernel(pad_means: &DMatrix<f64>, q: &[f64], kernel: KernelParams) -> Result<Self> {
        check_inputs(pad_means, q, 1)?;
        let gp = GpRegressor::fit(pad_means.clone(), DVector::from_column_slice(q), kernel)?;
        Ok(Self { gp })
    }

    pub fn kernel(&self) -> &KernelParams {
        self.gp.kernel()
    }

    pub fn pad_train(&self) -> &DMatrix<f64> {
        self.gp.inputs()
    }

    pub fn q_train(&self) -> &DVector<f64> {
        self.gp.targets()
    }

    pub fn regressor(&self) -> &GpRegressor {
        &self.gp
    }

    /// Plug-in posterior at the PAD mean.
    pub fn posterior_at(&self, pad_mean: &[f64; 3]) -> Result<QotPosterior> {
        let (mean, var) = self.gp.predict(pad_mean)?;
        Ok(QotPosterior { mean, var })
    }
}

fn check_inputs(pad_means: &DMatrix<f64>, q: &[f64], min: usize) -> Result<()> {
    if pad_means.ncols() != PAD_DIMS {
        return Err(Error::invalid(format!(
            "PAD matrix needs {PAD_DIMS} columns, got {}",
            pad_means.ncols()
        )));
    }
    if pad_means.nrows() != q.len() {
        return Err(Error::invalid("PAD rows and QoT values differ in count"));
    }
    if q.len() < min {
        return Err(Error::invalid(format!("need at least {min} samples, got {}", q.len())));
    }
    if let Some(v) = q.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("QoT values must be > 0, got {v}")));
    }
    Ok(())
}

/// Shuffled fold assignment for repeat `r`.
fn folds_for(m: usize, folds: usize, seed: u64, repeat: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut stream_rng(seed, streams::CV, repeat as u64));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos * folds / m].push(i);
    }
    out
}

/// Mean held-out squared error over all folds and repeats.
pub fn cv_mse(pad_means: &DMatrix<f64>, q: &[f64], kernel: KernelParams, cfg: &PerfGpConfig) -> Result<f64> {
    let m = q.len();
    let mut sse = 0.0;
    let mut count = 0usize;
    for r in 0..cfg.repeats {
        for fold in folds_for(m, cfg.folds, cfg.seed, r) {
            let train: Vec<usize> = (0..m).filter(|i| !fold.contains(i)).collect();
            let x = pad_means.select_rows(&train);
            let y: Vec<f64> = train.iter().map(|&i| q[i]).collect();
            let gp = GpRegressor::fit(x, DVector::from_vec(y), kernel)?;
            for &i in &fold {
                let row: Vec<f64> = pad_means.row(i).iter().copied().collect();
                let err = q[i] - gp.mean(&row)?;
                sse += err * err;
                count += 1;
            }
        }
    }
    Ok(sse / count as f64)
}

/// Exhaustive grid search over `(alpha, beta)` minimizing repeated k-fold CV
/// error, then a refit on all data. Ties go to the lowest (alpha, beta)
/// index.
pub fn fit_perf_gp(
    pad_means: &DMatrix<f64>,
    q: &[f64],
    cfg: &PerfGpConfig,
    mode: ExecMode,
) -> Result<(PerfGpModel, GridSearchReport)> {
    cfg.validate()?;
    check_inputs(pad_means, q, cfg.folds)?;
    let alphas = cfg.alpha_grid();
    let betas = cfg.beta_grid();
    let n = cfg.grid_size;
    let flat = exec::try_map_range(mode, n * n, |cell| {
        let kernel = KernelParams {
            alpha: alphas[cell / n],
            beta: betas[cell % n],
            noise_var: cfg.noise_var,
        };
        match cv_mse(pad_means, q, kernel, cfg) {
            Ok(v) => Ok(v),
            Err(Error::Numerical(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    })?;
    let mut best = (0, 0);
    let mut best_val = f64::INFINITY;
    for (cell, &v) in flat.iter().enumerate() {
        if v < best_val {
            best_val = v;
            best = (cell / n, cell % n);
        }
    }
    if !best_val.is_finite() {
        return Err(Error::numerical("no grid cell could be fitted"));
    }
    let kernel = KernelParams {
        alpha: alphas[best.0],
        beta: betas[best.1],
        noise_var: cfg.noise_var,
    };
    let model = PerfGpModel::with_kernel(pad_means, q, kernel)?;
    let cv = flat.chunks(n).map(<[f64]>::to_vec).collect();
    Ok((
        model,
        GridSearchReport {
            alpha_grid: alphas,
            beta_grid: betas,
            cv_mse: cv,
            best,
            best_cv_mse: best_val,
        },
    ))
}

/// Phase II posterior evaluated at the PAD posterior mean.
pub fn qot_posterior(model: &PerfGpModel, pad: &PadPosterior) -> Result<QotPosterior> {
    model.posterior_at(&pad.mean)
}

/// Moment-matched posterior that propagates the PAD variance through the
/// performance GP with unscented sigma points (`2d + 1` points, `κ = 3 - d`).
/// Not part of the default pipeline.
pub fn qot_posterior_unscented(model: &PerfGpModel, pad: &PadPosterior) -> Result<QotPosterior> {
    let d = PAD_DIMS as f64;
    let kappa = 3.0 - d;
    let mut points = vec![(pad.mean, kappa / (d + kappa))];
    for l in 0..PAD_DIMS {
        let spread = ((d + kappa) * pad.var[l].max(0.0)).sqrt();
        for sign in [1.0, -1.0] {
            let mut p = pad.mean;
            p[l] += sign * spread;
            points.push((p, 1.0 / (2.0 * (d + kappa))));
        }
    }
    let evals = points
        .iter()
        .map(|(p, w)| model.posterior_at(p).map(|post| (post, *w)))
        .collect::<Result<Vec<_>>>()?;
    let mean: f64 = evals.iter().map(|(p, w)| w * p.mean).sum();
    let var: f64 = evals
        .iter()
        .map(|(p, w)| w * (p.var + (p.mean - mean).powi(2)))
        .sum();
    Ok(QotPosterior {
        mean,
        var: var.max(0.0),
    })
}

/// `P{q >= q_r}` under the Gaussian posterior.
pub fn prob_q_at_least(post: &QotPosterior, q_r: f64) -> f64 {
    if post.var <= 0.0 {
        return if post.mean >= q_r { 1.0 } else { 0.0 };
    }
    let z = (q_r - post.mean) / (2.0 * post.var).sqrt();
    (0.5 * erfc(z)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_strictly_inside() {
        let g = log_grid(0.01, 0.1, 10);
        assert!(g.iter().all(|&a| a > 0.01 && a < 0.1));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let e = log_grid_edges(0.01, 0.1, 10);
        for (i, c) in g.iter().enumerate() {
            assert!(e[i] < *c && *c < e[i + 1]);
        }
    }

    #[test]
    fn folds_partition() {
        let f = folds_for(23, 5, 4, 1);
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
    }

    #[test]
    fn survival_function() {
        let p = QotPosterior { mean: 2.0, var: 0.3 };
        assert!((prob_q_at_least(&p, 2.0) - 0.5).abs() < 1e-15);
        let sd = 0.3f64.sqrt();
        assert!((prob_q_at_least(&p, 2.0 - 1.645 * sd) - 0.95).abs() < 1e-3);
        let point = QotPosterior { mean: 2.0, var: 0.0 };
        assert_eq!(prob_q_at_least(&point, 1.0), 1.0);
        assert_eq!(prob_q_at_least(&point, 2.5), 0.0);
    }

    #[test]
    fn too_few_samples() {
        let x = DMatrix::from_element(4, 3, 5.0);
        let r = fit_perf_gp(&x, &[1.0; 4], &PerfGpConfig::default(), ExecMode::Sequential);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
