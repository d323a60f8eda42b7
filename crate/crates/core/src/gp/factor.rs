//! Cholesky factorization of `K + σ²I` with jitter escalation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;
/// Largest relative interpolation residual tolerated when jitter was needed.
const JITTER_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
    /// Jitter added to the diagonal, relative to the mean diagonal entry.
    pub jitter: f64,
}

impl GramFactor {
    /// Factorizes `noisy_gram`. When plain Cholesky fails, jitter of
    /// `1e-10, 1e-9, …, 1e-4` (times the mean diagonal) is tried in turn.
    /// If jitter was needed, each column of `targets` must still be
    /// interpolated by the unjittered matrix; otherwise the Gram is treated as
    /// singular.
    pub fn new(noisy_gram: &DMatrix<f64>, targets: &[DVector<f64>]) -> Result<Self> {
        let n = noisy_gram.nrows();
        if n == 0 || noisy_gram.ncols() != n {
            return Err(Error::invalid("Gram matrix must be square and non-empty"));
        }
        if noisy_gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("Gram matrix has non-finite entries"));
        }
        if let Some(chol) = Cholesky::new(noisy_gram.clone()) {
            if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok(Self { chol, jitter: 0.0 });
            }
        }
        let scale = (noisy_gram.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            let mut m = noisy_gram.clone();
            for i in 0..n {
                m[(i, i)] += jitter * scale;
            }
            if let Some(chol) = Cholesky::new(m) {
                let f = Self { chol, jitter };
                f.check_interpolation(noisy_gram, targets)?;
                return Ok(f);
            }
            jitter *= 10.0;
        }
        Err(Error::numerical(format!(
            "Gram matrix of size {n} is not positive definite even with jitter {JITTER_MAX}"
        )))
    }

    fn check_interpolation(&self, gram: &DMatrix<f64>, targets: &[DVector<f64>]) -> Result<()> {
        for y in targets {
            let w = self.solve(y);
            let resid = (gram * &w - y).norm();
            let scale = y.norm().max(f64::MIN_POSITIVE);
            if !(resid / scale <= JITTER_RESIDUAL_TOL) {
                return Err(Error::numerical(format!(
                    "Gram matrix is singular: jitter {:e} changes the fit (relative residual {:.3e})",
                    self.jitter,
                    resid / scale
                )));
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }
}
