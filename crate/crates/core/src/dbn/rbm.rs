//! Bernoulli–Bernoulli restricted Boltzmann machine trained with CD-1.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::serde_mat;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmLayer {
    /// visible × hidden
    #[serde(with = "serde_mat::matrix")]
    pub weights: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub visible_bias: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub hidden_bias: DVector<f64>,
}

/// Momentum buffers, same shapes as the layer.
#[derive(Debug, Clone)]
pub struct RbmVelocity {
    weights: DMatrix<f64>,
    visible_bias: DVector<f64>,
    hidden_bias: DVector<f64>,
}

impl RbmVelocity {
    pub fn zeros_like(layer: &RbmLayer) -> Self {
        Self {
            weights: DMatrix::zeros(layer.n_visible(), layer.n_hidden()),
            visible_bias: DVector::zeros(layer.n_visible()),
            hidden_bias: DVector::zeros(layer.n_hidden()),
        }
    }
}

/// Sufficient statistics of one CD-1 step, averaged over the minibatch.
#[derive(Debug, Clone)]
pub struct Cd1Stats {
    /// `<v h>_data` using hidden probabilities.
    pub positive: DMatrix<f64>,
    /// `<v h>_recon`.
    pub negative: DMatrix<f64>,
    pub visible_mean: DVector<f64>,
    pub hidden_mean: DVector<f64>,
    /// Mean squared reconstruction error per visible unit.
    pub recon_error: f64,
}

impl RbmLayer {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n_visible, n_hidden),
            visible_bias: DVector::zeros(n_visible),
            hidden_bias: DVector::zeros(n_hidden),
        }
    }

    /// Gaussian weights with the given std, zero biases.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut layer = Self::zeros(n_visible, n_hidden);
        // Fill row-major so the draw order does not depend on nalgebra's storage.
        for r in 0..n_visible {
            for c in 0..n_hidden {
                layer.weights[(r, c)] = normal.sample(rng);
            }
        }
        layer
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.visible_bias.len() != self.n_visible() || self.hidden_bias.len() != self.n_hidden() {
            return Err(Error::invalid("RBM bias lengths do not match weight shape"));
        }
        let finite = self.weights.iter().all(|v| v.is_finite())
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::numerical("RBM has non-finite parameters"));
        }
        Ok(())
    }

    /// `P(h = 1 | v)` for each row of `v` (samples × visible).
    pub fn hidden_probs(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = v * &self.weights;
        for mut row in z.row_iter_mut() {
            for (x, b) in row.iter_mut().zip(self.hidden_bias.iter()) {
                *x = sigmoid(*x + b);
            }
        }
        z
    }

    /// `P(v = 1 | h)` for each row of `h`.
    pub fn visible_probs(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = h * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            for (x, b) in row.iter_mut().zip(self.visible_bias.iter()) {
                *x = sigmoid(*x + b);
            }
        }
        z
    }

    /// Free energy `F(v) = -v·b - Σ_j softplus(c_j + (vW)_j)` for every row.
    pub fn free_energy(&self, v: &DMatrix<f64>) -> Vec<f64> {
        let act = v * &self.weights;
        (0..v.nrows())
            .map(|r| {
                let vis: f64 = v.row(r).iter().zip(self.visible_bias.iter()).map(|(a, b)| a * b).sum();
                let hid: f64 = act
                    .row(r)
                    .iter()
                    .zip(self.hidden_bias.iter())
                    .map(|(a, c)| softplus(a + c))
                    .sum();
                -vis - hid
            })
            .collect()
    }

    /// Data-dependent statistics `<v_i h_j>`, `<v_i>`, `<h_j>` with hidden
    /// probabilities in place of samples.
    pub fn positive_statistics(&self, batch: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let h = self.hidden_probs(batch);
        let inv = 1.0 / batch.nrows() as f64;
        let vh = batch.transpose() * &h * inv;
        (vh, column_means(batch), column_means(&h))
    }

    /// One CD-1 step with momentum and L2 weight decay. The hidden layer is
    /// sampled once; reconstruction and negative phase use probabilities.
    pub fn cd1_update<R: Rng + ?Sized>(
        &mut self,
        velocity: &mut RbmVelocity,
        batch: &DMatrix<f64>,
        learning_rate: f64,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Cd1Stats> {
        if batch.ncols() != self.n_visible() {
            return Err(Error::invalid(format!(
                "minibatch has {} columns, RBM has {} visible units",
                batch.ncols(),
                self.n_visible()
            )));
        }
        if batch.nrows() == 0 {
            return Err(Error::invalid("empty minibatch"));
        }
        let n = batch.nrows() as f64;
        let h0 = self.hidden_probs(batch);
        let h0_sample = h0.map(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        let v1 = self.visible_probs(&h0_sample);
        let h1 = self.hidden_probs(&v1);

        let positive = batch.transpose() * &h0 / n;
        let negative = v1.transpose() * &h1 / n;
        let visible_mean = column_means(batch);
        let hidden_mean = column_means(&h0);
        let d_vis = &visible_mean - column_means(&v1);
        let d_hid = &hidden_mean - column_means(&h1);

        let grad_w = &positive - &negative - &self.weights * cfg.weight_decay;
        velocity.weights = &velocity.weights * cfg.momentum + grad_w * learning_rate;
        velocity.visible_bias = &velocity.visible_bias * cfg.momentum + d_vis * learning_rate;
        velocity.hidden_bias = &velocity.hidden_bias * cfg.momentum + d_hid * learning_rate;
        self.weights += &velocity.weights;
        self.visible_bias += &velocity.visible_bias;
        self.hidden_bias += &velocity.hidden_bias;

        let recon_error = (batch - &v1).map(|d| d * d).sum() / (n * batch.ncols() as f64);
        Ok(Cd1Stats {
            positive,
            negative,
            visible_mean,
            hidden_mean,
            recon_error,
        })
    }

    pub fn reconstruction_error(&self, data: &DMatrix<f64>) -> f64 {
        let recon = self.visible_probs(&self.hidden_probs(data));
        (data - recon).map(|d| d * d).sum() / (data.nrows() * data.ncols()) as f64
    }
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}
