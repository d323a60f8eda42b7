//! Laplace approximation of `p(q | e) = ∫ p(q | f) p(f | e) df`.
//!
//! [`laplace_marginal`] expands around the PAD posterior mode with the PAD
//! posterior covariance. Because `p(f | e)` is Gaussian, the density and
//! volume factors cancel and the result is the performance likelihood at the
//! plug-in PAD mean.
//!
//! [`laplace_marginal_joint`] is the textbook variant: it finds the mode of
//! the full integrand and uses its curvature. It is exact whenever the
//! likelihood mean is linear in `f` with constant variance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::pad::{PadPosterior, PAD_DIMS};
use super::perf::{qot_posterior, PerfGpModel};
use crate::error::{Error, Result};

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Variance of an observed performance value at the plug-in point: posterior
/// variance of the latent function plus observation noise.
pub fn predictive_variance(model: &PerfGpModel, pad: &PadPosterior) -> Result<(f64, f64)> {
    let post = qot_posterior(model, pad)?;
    Ok((post.mean, post.var + model.kernel().noise_var))
}

/// `p(q* | f̂) p(f̂ | e) (2π)^{3/2} |Σ_f|^{1/2}` with `f̂ = pad.mean`,
/// `Σ_f = diag(pad.var)`.
pub fn laplace_marginal(q_star: f64, pad: &PadPosterior, model: &PerfGpModel) -> Result<f64> {
    if pad.var.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("PAD posterior variance must be finite and >= 0"));
    }
    let (mean, var) = predictive_variance(model, pad)?;
    if var <= 0.0 {
        return Err(Error::degenerate(
            "performance posterior has zero variance and zero noise; the density is a point mass",
        ));
    }
    let likelihood = gaussian_pdf(q_star, mean, var);
    if pad.var.iter().any(|v| *v == 0.0) {
        return Ok(likelihood);
    }
    let density_at_mode: f64 = pad.var.iter().map(|v| 1.0 / (2.0 * PI * v).sqrt()).product();
    let volume = (2.0 * PI).powf(PAD_DIMS as f64 / 2.0) * pad.var.iter().product::<f64>().sqrt();
    let full = likelihood * density_at_mode * volume;
    debug_assert!(
        (full - likelihood).abs() <= 1e-9 * likelihood.max(f64::MIN_POSITIVE),
        "Laplace factors failed to cancel: {full} vs {likelihood}"
    );
    Ok(full)
}

/// A performance likelihood `p(q | f) = N(q; m(f), s²)` with smooth mean.
pub trait PerformanceLikelihood {
    /// `m(f)`, `∇m(f)`, `∇²m(f)`.
    fn mean_derivs(&self, f: &[f64; 3]) -> Result<(f64, DVector<f64>, DMatrix<f64>)>;
    fn variance(&self) -> f64;
}

/// `q = w·f + b + ε`, `ε ~ N(0, s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianLikelihood {
    pub weights: [f64; 3],
    pub offset: f64,
    pub noise_var: f64,
}

impl PerformanceLikelihood for LinearGaussianLikelihood {
    fn mean_derivs(&self, f: &[f64; 3]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let m = self.offset + self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
        Ok((m, DVector::from_column_slice(&self.weights), DMatrix::zeros(3, 3)))
    }

    fn variance(&self) -> f64 {
        self.noise_var
    }
}

/// Performance GP mean as a function of `f`, with the predictive variance
/// frozen at a reference PAD point.
#[derive(Debug, Clone)]
pub struct GpMeanLikelihood<'a> {
    pub model: &'a PerfGpModel,
    pub variance: f64,
}

impl<'a> GpMeanLikelihood<'a> {
    pub fn at(model: &'a PerfGpModel, pad: &PadPosterior) -> Result<Self> {
        let (_, variance) = predictive_variance(model, pad)?;
        Ok(Self { model, variance })
    }
}

impl PerformanceLikelihood for GpMeanLikelihood<'_> {
    fn mean_derivs(&self, f: &[f64; 3]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.model.regressor().mean_and_grad(f)
    }

    fn variance(&self) -> f64 {
        self.variance
    }
}

const NEWTON_MAX_ITERS: usize = 100;

/// Laplace approximation around the mode of `p(q* | f) p(f | e)`.
pub fn laplace_marginal_joint<L: PerformanceLikelihood>(q_star: f64, pad: &PadPosterior, lik: &L) -> Result<f64> {
    if pad.var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("joint Laplace needs strictly positive PAD variances"));
    }
    let s2 = lik.variance();
    if !(s2 > 0.0) {
        return Err(Error::invalid("likelihood variance must be > 0"));
    }
    let prior_prec = DVector::from_iterator(3, pad.var.iter().map(|v| 1.0 / v));
    let log_integrand = |f: &[f64; 3]| -> Result<f64> {
        let (m, _, _) = lik.mean_derivs(f)?;
        let mut h = -0.5 * (2.0 * PI * s2).ln() - (q_star - m).powi(2) / (2.0 * s2);
        for l in 0..3 {
            h += -0.5 * (2.0 * PI * pad.var[l]).ln() - (f[l] - pad.mean[l]).powi(2) / (2.0 * pad.var[l]);
        }
        Ok(h)
    };
    let derivs = |f: &[f64; 3]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (m, g, hm) = lik.mean_derivs(f)?;
        let r = (q_star - m) / s2;
        let mut grad = &g * r;
        let mut hess = hm * r - (&g * g.transpose()) / s2;
        for l in 0..3 {
            grad[l] -= (f[l] - pad.mean[l]) * prior_prec[l];
            hess[(l, l)] -= prior_prec[l];
        }
        Ok((grad, hess))
    };

    let mut f = pad.mean;
    let mut h = log_integrand(&f)?;
    for _ in 0..NEWTON_MAX_ITERS {
        let (grad, hess) = derivs(&f)?;
        let neg = -hess;
        let step = match neg.clone().cholesky() {
            Some(c) => c.solve(&grad),
            // fall back to a prior-preconditioned gradient step
            None => grad.component_div(&prior_prec),
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = [f[0] + t * step[0], f[1] + t * step[1], f[2] + t * step[2]];
            let hc = log_integrand(&cand)?;
            if hc >= h - 1e-14 * h.abs() {
                let moved = (t * step.norm()) < 1e-13 * (1.0 + f.iter().map(|x| x.abs()).sum::<f64>());
                f = cand;
                h = hc;
                accepted = true;
                if moved {
                    t = 0.0;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || t == 0.0 {
            break;
        }
    }
    let (_, hess) = derivs(&f)?;
    let neg = -hess;
    let det = neg.determinant();
    if !(det > 0.0) {
        return Err(Error::numerical("integrand curvature is not negative definite at the mode"));
    }
    Ok(h.exp() * (2.0 * PI).powf(1.5) / det.sqrt())
}
