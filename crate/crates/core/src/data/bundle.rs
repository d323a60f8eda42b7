//! Model bundles. Only parameters and training data are stored; Cholesky
//! factors are recomputed on load.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::io::{load_json, save_json};
use crate::dbn::{DeepFeatureMap, FineTuneReport, TrainConfig};
use crate::error::{Error, Result};
use crate::gp::kernel::KernelParams;
use crate::gp::pad::PadGpModel;
use crate::gp::perf::{GridSearchReport, PerfGpModel};
use crate::serde_mat;
use crate::signal::FeatureConfig;

/// Pretrained and fine-tuned network with the kernels it was tuned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbnBundle {
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub feature_map: DeepFeatureMap,
    pub kernels: Vec<KernelParams>,
    pub free_energy_ratio: Option<f64>,
    pub finetune: FineTuneReport,
}

impl DbnBundle {
    pub const KIND: &'static str = "dbn";

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: Self = load_json(path, Self::KIND)?;
        b.feature_map.dbn.validate()?;
        Ok(b)
    }
}

/// Phase I model: the feature map plus the labelled set it conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadGpBundle {
    pub features: FeatureConfig,
    pub feature_map: DeepFeatureMap,
    pub kernels: Vec<KernelParams>,
    #[serde(with = "serde_mat::matrix")]
    pub train_features: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub train_labels: DMatrix<f64>,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

impl PadGpBundle {
    pub const KIND: &'static str = "pad-gp";

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path, Self::KIND)
    }

    pub fn model(&self) -> Result<PadGpModel> {
        if self.train_features.ncols() != self.features.mode.dim() {
            return Err(Error::invalid("bundle feature width does not match its feature mode"));
        }
        PadGpModel::fit(
            self.feature_map.clone(),
            &self.train_features,
            &self.train_labels,
            &self.kernels,
        )
    }
}

/// Phase II model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfGpBundle {
    pub kernel: KernelParams,
    #[serde(with = "serde_mat::matrix")]
    pub train_pad: DMatrix<f64>,
    pub train_q: Vec<f64>,
    pub grid: Option<GridSearchReport>,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

impl PerfGpBundle {
    pub const KIND: &'static str = "perf-gp";

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path, Self::KIND)
    }

    pub fn model(&self) -> Result<PerfGpModel> {
        PerfGpModel::with_kernel(&self.train_pad, &self.train_q, self.kernel)
    }
}
