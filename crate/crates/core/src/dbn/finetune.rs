//! Supervised fine-tuning of the network and kernel hyperparameters.
//!
//! The objective is the leave-one-out predictive-mean squared error of the
//! per-output GPs on the latent features. With `A = (K + σ²I)⁻¹` and
//! `a = A y`, the held-out residual of sample `i` is `a_i / A_ii`, so the
//! whole objective and its exact gradient come from one factorization per
//! output dimension.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use super::{DbnParams, FineTuneOptimizer, TrainConfig};

use crate::error::{Error, Result};
use crate::gp::factor::GramFactor;
use crate::gp::kernel::{pairwise_sq_dists, KernelParams};

/// Inputs must already be normalized to the network's input scale.
#[derive(Debug, Clone)]
pub struct FineTuneData {
    pub train_x: DMatrix<f64>,
    /// samples × outputs
    pub train_y: DMatrix<f64>,
    pub validation: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Gradient of the LOO objective.
#[derive(Debug, Clone)]
pub struct LooGradient {
    /// Per layer: (weights, hidden bias).
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_history: Vec<f64>,
    pub validation_history: Vec<f64>,
}

fn check_kernels(kernels: &[KernelParams], outputs: usize) -> Result<()> {
    if kernels.len() != outputs {
        return Err(Error::invalid(format!(
            "{} kernels for {outputs} outputs",
            kernels.len()
        )));
    }
    kernels.iter().try_for_each(KernelParams::validate)
}

fn check_shapes(dbn: &DbnParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("labeled set is empty"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::invalid("inputs and labels have different sample counts"));
    }
    if x.ncols() != dbn.input_dim() {
        return Err(Error::invalid(format!(
            "inputs have {} features, network expects {}",
            x.ncols(),
            dbn.input_dim()
        )));
    }
    Ok(())
}

/// LOO mean squared error (averaged over samples and outputs) of GPs on the
/// latent features `phi`. Also returns `dL/dK_ℓ` (noise-free Gram) per output
/// when `want_grad` is set.
fn loo_on_latents(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    kernels: &[KernelParams],
    want_grad: bool,
) -> Result<(f64, Vec<(DMatrix<f64>, DMatrix<f64>)>)> {
    let m = phi.nrows();
    let d = y.ncols();
    let scale = 1.0 / (m * d) as f64;
    let d2 = pairwise_sq_dists(phi);
    let mut loss = 0.0;
    let mut grads = Vec::new();
    for (l, p) in kernels.iter().enumerate() {
        let k = d2.map(|v| p.eval_sq_dist(v));
        let mut noisy = k.clone();
        for i in 0..m {
            noisy[(i, i)] += p.noise_var;
        }
        let target = y.column(l).into_owned();
        let factor = GramFactor::new(&noisy, std::slice::from_ref(&target))?;
        let inv = factor.inverse();
        let a = &inv * &target;
        let r = DVector::from_fn(m, |i, _| a[i] / inv[(i, i)]);
        loss += r.norm_squared() * scale;
        if want_grad {
            // dL = cᵀ da + Σ_i d_i dA_ii with c_i = 2 r_i / (s A_ii), d_i = -c_i r_i
            let c = DVector::from_fn(m, |i, _| 2.0 * r[i] * scale / inv[(i, i)]);
            let dd = DVector::from_fn(m, |i, _| -c[i] * r[i]);
            let ac = &inv * &c;
            let mut g = -(&ac * a.transpose());
            let mut ad = inv.clone();
            for j in 0..m {
                let s = dd[j];
                ad.column_mut(j).scale_mut(s);
            }
            g -= &ad * &inv;
            grads.push((g, k));
        }
    }
    Ok((loss, grads))
}

/// LOO objective and its gradient with respect to every network weight,
/// hidden bias, and each output's `alpha` and `beta`.
pub fn loo_loss_and_grad(
    dbn: &DbnParams,
    kernels: &[KernelParams],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(f64, LooGradient)> {
    check_shapes(dbn, x, y)?;
    check_kernels(kernels, y.ncols())?;
    let acts = dbn.forward_all(x);
    let phi = acts.last().expect("non-empty");
    let (loss, grads) = loo_on_latents(phi, y, kernels, true)?;

    let d2 = pairwise_sq_dists(phi);
    let mut d_phi = DMatrix::zeros(phi.nrows(), phi.ncols());
    let mut g_alpha = Vec::with_capacity(kernels.len());
    let mut g_beta = Vec::with_capacity(kernels.len());
    for ((g, k), p) in grads.iter().zip(kernels) {
        let gk = g.component_mul(k);
        g_alpha.push(gk.sum() / p.alpha);
        g_beta.push(gk.component_mul(&d2).sum() / (2.0 * p.beta * p.beta));
        // dL/dφ_j = -(1/β) Σ_k W_jk (φ_j - φ_k), W = (G + Gᵀ) ∘ K
        let w = (g + g.transpose()).component_mul(k);
        let row_sums = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
        let mut term = phi.clone();
        for (j, s) in row_sums.iter().enumerate() {
            term.row_mut(j).scale_mut(*s);
        }
        term -= &w * phi;
        d_phi -= term / p.beta;
    }

    let mut layer_grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); dbn.layers.len()];
    let mut upstream = d_phi;
    for k in (0..dbn.layers.len()).rev() {
        let out = &acts[k + 1];
        let dz = upstream.component_mul(&out.map(|h| h * (1.0 - h)));
        let dw = acts[k].transpose() * &dz;
        let dc = DVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum()));
        upstream = &dz * dbn.layers[k].weights.transpose();
        layer_grads[k] = (dw, dc);
    }
    Ok((
        loss,
        LooGradient {
            layers: layer_grads,
            alpha: g_alpha,
            beta: g_beta,
        },
    ))
}

/// LOO objective only.
pub fn loo_loss(dbn: &DbnParams, kernels: &[KernelParams], x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(dbn, x, y)?;
    check_kernels(kernels, y.ncols())?;
    let phi = dbn.forward_batch(x)?;
    Ok(loo_on_latents(&phi, y, kernels, false)?.0)
}

/// Mean squared error (over samples and outputs) of GP predictive means on a
/// held-out set.
pub fn holdout_mse(
    dbn: &DbnParams,
    kernels: &[KernelParams],
    train: (&DMatrix<f64>, &DMatrix<f64>),
    test: (&DMatrix<f64>, &DMatrix<f64>),
) -> Result<f64> {
    let phi_tr = dbn.forward_batch(train.0)?;
    let phi_te = dbn.forward_batch(test.0)?;
    latent_holdout_mse(&phi_tr, train.1, &phi_te, test.1, kernels)
}

pub(crate) fn latent_holdout_mse(
    phi_tr: &DMatrix<f64>,
    y_tr: &DMatrix<f64>,
    phi_te: &DMatrix<f64>,
    y_te: &DMatrix<f64>,
    kernels: &[KernelParams],
) -> Result<f64> {
    let m = phi_tr.nrows();
    let d2 = pairwise_sq_dists(phi_tr);
    let mut sse = 0.0;
    for (l, p) in kernels.iter().enumerate() {
        let mut noisy = d2.map(|v| p.eval_sq_dist(v));
        for i in 0..m {
            noisy[(i, i)] += p.noise_var;
        }
        let target = y_tr.column(l).into_owned();
        let factor = GramFactor::new(&noisy, std::slice::from_ref(&target))?;
        let weights = factor.solve(&target);
        for (t, row) in phi_te.row_iter().enumerate() {
            let ks = crate::gp::kernel::cross(phi_tr, &row.iter().copied().collect::<Vec<_>>(), p);
            let err = y_te[(t, l)] - ks.dot(&weights);
            sse += err * err;
        }
    }
    Ok(sse / (phi_te.nrows() * kernels.len()) as f64)
}

/// Per-block optimizer state. Blocks are the layer weights, the layer
/// biases, and the log-hyperparameters, in that order.
struct Stepper {
    kind: FineTuneOptimizer,
    momentum: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Stepper {
    fn new(kind: FineTuneOptimizer, momentum: f64, sizes: &[usize]) -> Self {
        Self {
            kind,
            momentum,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn tick(&mut self) {
        self.t += 1;
    }

    fn step(&mut self, block: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        let m = &mut self.first[block];
        match self.kind {
            FineTuneOptimizer::Momentum => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(m.iter_mut()) {
                    *v = *v * self.momentum - lr * g;
                    *p += *v;
                }
            }
            FineTuneOptimizer::Adam => {
                let v = &mut self.second[block];
                let c1 = 1.0 - ADAM_B1.powi(self.t);
                let c2 = 1.0 - ADAM_B2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
                    *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Gradient descent on the LOO objective with linearly annealed learning
/// rate and momentum. Returns the parameters with the best validation loss
/// (training LOO loss when no validation set is given), including the
/// starting point. Stops after `cfg.patience` epochs without improvement.
pub fn fine_tune(
    dbn: &DbnParams,
    kernels: &[KernelParams],
    data: &FineTuneData,
    cfg: &TrainConfig,
) -> Result<(DbnParams, Vec<KernelParams>, FineTuneReport)> {
    cfg.validate()?;
    check_kernels(kernels, data.train_y.ncols())?;
    check_shapes(dbn, &data.train_x, &data.train_y)?;
    if let Some((vx, vy)) = &data.validation {
        check_shapes(dbn, vx, vy)?;
    }

    let validation_loss = |net: &DbnParams, ks: &[KernelParams], train_loss: f64| -> Result<f64> {
        match &data.validation {
            Some((vx, vy)) => holdout_mse(net, ks, (&data.train_x, &data.train_y), (vx, vy)),
            None => Ok(train_loss),
        }
    };

    let mut net = dbn.clone();
    let mut ks = kernels.to_vec();
    let initial = loo_loss(&net, &ks, &data.train_x, &data.train_y)?;
    let mut best = (net.clone(), ks.clone());
    let mut best_val = validation_loss(&net, &ks, initial)?;
    let mut report = FineTuneReport {
        initial_train_loss: initial,
        final_train_loss: initial,
        best_validation_loss: best_val,
        best_epoch: 0,
        epochs_run: 0,
        train_history: vec![initial],
        validation_history: vec![best_val],
    };

    let n_layers = net.layers.len();
    let mut sizes: Vec<usize> = net.layers.iter().map(|l| l.weights.len()).collect();
    sizes.extend(net.layers.iter().map(|l| l.hidden_bias.len()));
    sizes.extend([ks.len(), ks.len()]);
    let mut stepper = Stepper::new(cfg.finetune_optimizer, cfg.momentum, &sizes);
    let mut since_best = 0;
    let total = cfg.finetune_epochs;
    for epoch in 0..total {
        let lr = cfg.finetune_lr(epoch, total);
        let (_, grad) = match loo_loss_and_grad(&net, &ks, &data.train_x, &data.train_y) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => break,
            Err(e) => return Err(e),
        };
        stepper.tick();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let g_w = &grad.layers[k].0 + &layer.weights * cfg.finetune_weight_decay;
            stepper.step(k, layer.weights.as_mut_slice(), g_w.as_slice(), lr);
            stepper.step(n_layers + k, layer.hidden_bias.as_mut_slice(), grad.layers[k].1.as_slice(), lr);
        }
        // hyperparameters move in log space so they stay positive
        let mut log_a: Vec<f64> = ks.iter().map(|p| p.alpha.ln()).collect();
        let mut log_b: Vec<f64> = ks.iter().map(|p| p.beta.ln()).collect();
        let g_a: Vec<f64> = grad.alpha.iter().zip(&ks).map(|(g, p)| g * p.alpha).collect();
        let g_b: Vec<f64> = grad.beta.iter().zip(&ks).map(|(g, p)| g * p.beta).collect();
        stepper.step(2 * n_layers, &mut log_a, &g_a, lr);
        stepper.step(2 * n_layers + 1, &mut log_b, &g_b, lr);
        for ((p, a), b) in ks.iter_mut().zip(&log_a).zip(&log_b) {
            p.alpha = a.exp();
            p.beta = b.exp();
        }
        report.epochs_run = epoch + 1;
        let train_loss = match loo_loss(&net, &ks, &data.train_x, &data.train_y) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::Numerical(_)) => break,
            Err(e) => return Err(e),
        };
        let val = match validation_loss(&net, &ks, train_loss) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::Numerical(_)) => break,
            Err(e) => return Err(e),
        };
        report.train_history.push(train_loss);
        report.validation_history.push(val);
        if val < best_val {
            best_val = val;
            best = (net.clone(), ks.clone());
            report.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    report.best_validation_loss = best_val;
    report.final_train_loss = loo_loss(&best.0, &best.1, &data.train_x, &data.train_y)?;
    Ok((best.0, best.1, report))
}
