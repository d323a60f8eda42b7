use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel `alpha * exp(-|x - y|^2 / (2 beta))` plus
/// i.i.d. observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Signal variance.
    pub alpha: f64,
    /// Squared length scale.
    pub beta: f64,
    pub noise_var: f64,
}

impl KernelParams {
    pub fn new(alpha: f64, beta: f64, noise_var: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            noise_var,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("kernel alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("kernel beta must be > 0, got {}", self.beta)));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        self.alpha * (-d2 / (2.0 * self.beta)).exp()
    }
}

pub(crate) fn sq_dist<'a>(x: impl IntoIterator<Item = &'a f64>, y: impl IntoIterator<Item = &'a f64>) -> f64 {
    x.into_iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rbf_kernel(x: &[f64], y: &[f64], p: &KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(p.eval_sq_dist(sq_dist(x, y)))
}

/// Pairwise squared distances between rows.
pub fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(x.row(i).iter(), x.row(j).iter());
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Noise-free Gram matrix over the rows of `x`.
pub fn gram(x: &DMatrix<f64>, p: &KernelParams) -> DMatrix<f64> {
    pairwise_sq_dists(x).map(|d2| p.eval_sq_dist(d2))
}

/// Kernel vector between each row of `x` and the query point.
pub fn cross(x: &DMatrix<f64>, query: &[f64], p: &KernelParams) -> DVector<f64> {
    DVector::from_iterator(
        x.nrows(),
        x.row_iter().map(|r| p.eval_sq_dist(sq_dist(r.iter(), query))),
    )
}
