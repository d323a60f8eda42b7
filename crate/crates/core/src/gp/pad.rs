//! Phase I: PAD posterior from EEG features through the deep kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::{pairwise_sq_dists, KernelParams};
use super::regressor::GpRegressor;
use crate::dbn::DeepFeatureMap;
use crate::error::{Error, Result};
use crate::signal::FeatureVector;

pub const PAD_DIMS: usize = 3;
pub const PAD_MIN: f64 = 1.0;
pub const PAD_MAX: f64 = 9.0;

/// Independent Gaussian belief over (pleasure, arousal, dominance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadPosterior {
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

/// Three per-dimension GPs on the latent features of one network.
#[derive(Debug, Clone)]
pub struct PadGpModel {
    feature_map: DeepFeatureMap,
    labels: DMatrix<f64>,
    raw_features: DMatrix<f64>,
    gps: Vec<GpRegressor>,
}

pub(crate) fn check_labels(labels: &DMatrix<f64>) -> Result<()> {
    if labels.ncols() != PAD_DIMS {
        return Err(Error::invalid(format!(
            "labels need {PAD_DIMS} columns, got {}",
            labels.ncols()
        )));
    }
    if let Some(v) = labels.iter().find(|v| !(PAD_MIN..=PAD_MAX).contains(*v)) {
        return Err(Error::invalid(format!("PAD label {v} outside [1, 9]")));
    }
    Ok(())
}

impl PadGpModel {
    /// Maps `features` (samples × n, raw FD values) through the network and
    /// conditions one GP per PAD dimension on `labels` (samples × 3).
    pub fn fit(
        feature_map: DeepFeatureMap,
        features: &DMatrix<f64>,
        labels: &DMatrix<f64>,
        kernels: &[KernelParams],
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("PAD GP needs at least one labeled window"));
        }
        if features.nrows() != labels.nrows() {
            return Err(Error::invalid("features and labels have different sample counts"));
        }
        check_labels(labels)?;
        if kernels.len() != PAD_DIMS {
            return Err(Error::invalid(format!("need {PAD_DIMS} kernels, got {}", kernels.len())));
        }
        let latent = feature_map.map_batch(features)?;
        let gps = kernels
            .iter()
            .enumerate()
            .map(|(l, k)| GpRegressor::fit(latent.clone(), labels.column(l).into_owned(), *k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_map,
            labels: labels.clone(),
            raw_features: features.clone(),
            gps,
        })
    }

    pub fn feature_map(&self) -> &DeepFeatureMap {
        &self.feature_map
    }

    pub fn kernels(&self) -> Vec<KernelParams> {
        self.gps.iter().map(|g| *g.kernel()).collect()
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn raw_features(&self) -> &DMatrix<f64> {
        &self.raw_features
    }

    pub fn latent_train(&self) -> &DMatrix<f64> {
        self.gps[0].inputs()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.dbn.input_dim()
    }

    pub fn posterior(&self, e: &FeatureVector) -> Result<PadPosterior> {
        self.posterior_values(&e.values)
    }

    pub fn posterior_values(&self, e: &[f64]) -> Result<PadPosterior> {
        let phi = self.feature_map.map_values(e)?;
        self.posterior_latent(&phi.0)
    }

    pub fn posterior_latent(&self, phi: &[f64]) -> Result<PadPosterior> {
        let mut post = PadPosterior {
            mean: [0.0; 3],
            var: [0.0; 3],
        };
        for (l, gp) in self.gps.iter().enumerate() {
            let (m, v) = gp.predict(phi)?;
            post.mean[l] = m;
            post.var[l] = v;
        }
        Ok(post)
    }

    /// Posterior means for many raw feature rows.
    pub fn posterior_means(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let latent = self.feature_map.map_batch(features)?;
        let mut out = DMatrix::zeros(features.nrows(), PAD_DIMS);
        for (r, row) in latent.row_iter().enumerate() {
            let phi: Vec<f64> = row.iter().copied().collect();
            for (l, gp) in self.gps.iter().enumerate() {
                out[(r, l)] = gp.mean(&phi)?;
            }
        }
        Ok(out)
    }
}

/// Starting hyperparameters: `alpha` = mean squared label, `beta` = half the
/// median pairwise squared distance of the inputs (floored).
pub fn heuristic_kernels(inputs: &DMatrix<f64>, labels: &DMatrix<f64>, noise_var: f64) -> Vec<KernelParams> {
    let d2 = pairwise_sq_dists(inputs);
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..d2.nrows() {
        for j in (i + 1)..d2.ncols() {
            dists.push(d2[(i, j)]);
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists.get(dists.len() / 2).copied().unwrap_or(1.0);
    let beta = (median / 2.0).max(1e-6);
    labels
        .column_iter()
        .map(|c| {
            let alpha = (c.norm_squared() / c.len().max(1) as f64).max(1e-6);
            KernelParams {
                alpha,
                beta,
                noise_var,
            }
        })
        .collect()
}
