use nalgebra::{DMatrix, DVector};

use super::factor::GramFactor;
use super::kernel::{cross, gram, KernelParams};
use crate::error::{Error, Result};

/// Variance below zero by less than this is rounding; larger is an error.
pub const NEGATIVE_VAR_TOL: f64 = 1e-10;

/// Zero-mean single-output GP regression conditioned on `(inputs, targets)`.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    kernel: KernelParams,
    factor: GramFactor,
    weights: DVector<f64>,
}

impl GpRegressor {
    /// `inputs` rows are training points.
    pub fn fit(inputs: DMatrix<f64>, targets: DVector<f64>, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        if inputs.nrows() == 0 {
            return Err(Error::invalid("GP needs at least one training point"));
        }
        if inputs.nrows() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        let mut k = gram(&inputs, &kernel);
        for i in 0..k.nrows() {
            k[(i, i)] += kernel.noise_var;
        }
        let factor = GramFactor::new(&k, std::slice::from_ref(&targets))?;
        let weights = factor.solve(&targets);
        Ok(Self {
            inputs,
            targets,
            kernel,
            factor,
            weights,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Posterior mean.
    pub fn mean(&self, query: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        Ok(cross(&self.inputs, query, &self.kernel).dot(&self.weights))
    }

    /// Noise-free posterior mean and variance at `query`.
    pub fn predict(&self, query: &[f64]) -> Result<(f64, f64)> {
        self.check_query(query)?;
        let ks = cross(&self.inputs, query, &self.kernel);
        let mean = ks.dot(&self.weights);
        let v = self.factor.solve(&ks);
        let var = self.kernel.alpha - ks.dot(&v);
        Ok((mean, clamp_variance(var)?))
    }

    /// Mean and gradient of the mean with respect to the query point.
    pub fn mean_and_grad(&self, query: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.check_query(query)?;
        let d = query.len();
        let ks = cross(&self.inputs, query, &self.kernel);
        let mut mean = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let beta = self.kernel.beta;
        for (i, row) in self.inputs.row_iter().enumerate() {
            let wk = self.weights[i] * ks[i];
            mean += wk;
            let diff = DVector::from_iterator(d, row.iter().zip(query).map(|(xi, q)| xi - q));
            // ∂k/∂q = k (x_i - q) / β ; ∂²k/∂q² = k [(x_i - q)(x_i - q)ᵀ / β² - I / β]
            grad += &diff * (wk / beta);
            hess += (&diff * diff.transpose()) * (wk / (beta * beta));
            for j in 0..d {
                hess[(j, j)] -= wk / beta;
            }
        }
        Ok((mean, grad, hess))
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.inputs.ncols() {
            return Err(Error::invalid(format!(
                "query has {} dimensions, model has {}",
                query.len(),
                self.inputs.ncols()
            )));
        }
        Ok(())
    }
}

pub(crate) fn clamp_variance(var: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var)
    } else if var > -NEGATIVE_VAR_TOL {
        Ok(0.0)
    } else {
        Err(Error::numerical(format!("posterior variance {var:e} is negative")))
    }
}
