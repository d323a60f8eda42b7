//! End-to-end training: elicitation data → deep feature map and PAD GP;
//! induction data → performance GP. Also the plain-kernel baseline used to
//! judge the deep kernel.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{DbnBundle, ElicitationDataset, InductionDataset, PadGpBundle, PerfGpBundle};
use crate::dbn::{fine_tune, free_energy_ratio, pretrain_dbn, DeepFeatureMap, FineTuneData, MinMaxNormalizer, TrainConfig};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::gp::kernel::{gram, KernelParams};
use crate::gp::pad::{heuristic_kernels, PadGpModel, PAD_DIMS};
use crate::gp::perf::{fit_perf_gp, log_grid, PerfGpConfig, PerfGpModel};
use crate::gp::{GpRegressor, GramFactor};
use crate::rng::{stream_rng, streams};
use crate::signal::{FeatureConfig, FeatureMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    /// Hidden widths; `None` picks 4 × 20 for EEG mode and 4 × 80 for bands.
    pub hidden: Option<Vec<usize>>,
    pub train: TrainConfig,
    /// Observation noise of the PAD GPs.
    pub pad_noise_var: f64,
    /// Share of each dataset held out for the reported validation error.
    pub validation_fraction: f64,
    /// Share of the remaining training rows used for early stopping.
    pub early_stop_fraction: f64,
    pub perf: PerfGpConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            hidden: None,
            train: TrainConfig::default(),
            pad_noise_var: 0.1,
            validation_fraction: 0.2,
            early_stop_fraction: 0.2,
            perf: PerfGpConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn architecture(&self) -> Vec<usize> {
        let hidden = self.hidden.clone().unwrap_or_else(|| match self.features.mode {
            FeatureMode::Eeg => vec![20; 4],
            FeatureMode::Bands => vec![80; 4],
        });
        std::iter::once(self.features.mode.dim()).chain(hidden).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.perf.validate()?;
        if !(self.pad_noise_var > 0.0) {
            return Err(Error::invalid("pad_noise_var must be > 0"));
        }
        for (name, f) in [
            ("validation_fraction", self.validation_fraction),
            ("early_stop_fraction", self.early_stop_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.architecture().iter().any(|w| *w == 0) || self.architecture().len() < 2 {
            return Err(Error::invalid("hidden widths must be positive and non-empty"));
        }
        Ok(())
    }
}

/// Seeded split into `(kept, held_out)`, both in ascending order.
pub fn split_indices(m: usize, fraction: f64, seed: u64, salt: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut stream_rng(seed, streams::SPLIT, salt));
    let held = ((m as f64) * fraction).round() as usize;
    let mut out = idx.split_off(held.min(m));
    let mut held_out = idx;
    out.sort_unstable();
    held_out.sort_unstable();
    (out, held_out)
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |r, c| {
        if r < a.nrows() {
            a[(r, c)]
        } else {
            b[(r - a.nrows(), c)]
        }
    })
}

fn mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared() / (a.len().max(1)) as f64
}

#[derive(Debug, Clone)]
pub struct PadTraining {
    pub dbn: DbnBundle,
    pub pad: PadGpBundle,
    pub model: PadGpModel,
}

struct Splits {
    train: Vec<usize>,
    validation: Vec<usize>,
    fit: Vec<usize>,
    stop: Vec<usize>,
}

fn elicitation_splits(data: &ElicitationDataset, cfg: &PipelineConfig) -> Splits {
    let seed = cfg.train.seed;
    let (train, validation) = split_indices(data.len(), cfg.validation_fraction, seed, 0);
    let (fit, stop) = split_indices(train.len(), cfg.early_stop_fraction, seed, 1);
    Splits {
        fit: fit.iter().map(|&i| train[i]).collect(),
        stop: stop.iter().map(|&i| train[i]).collect(),
        train,
        validation,
    }
}

fn check_elicitation(data: &ElicitationDataset, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    data.validate()?;
    if data.mode != cfg.features.mode {
        return Err(Error::invalid(format!(
            "dataset has {} features but the config asks for {}",
            data.mode, cfg.features.mode
        )));
    }
    Ok(())
}

/// Pretrains and fine-tunes the network on the training rows. The held-out
/// validation rows are never touched.
pub fn train_dbn(data: &ElicitationDataset, cfg: &PipelineConfig) -> Result<DbnBundle> {
    train_dbn_with(data, None, cfg)
}

/// Like [`train_dbn`], with extra unlabeled feature rows (for example an
/// induction session) joining the normalizer fit and the CD-1 pretraining.
pub fn train_dbn_with(
    data: &ElicitationDataset,
    unlabeled: Option<&DMatrix<f64>>,
    cfg: &PipelineConfig,
) -> Result<DbnBundle> {
    check_elicitation(data, cfg)?;
    if let Some(u) = unlabeled {
        if u.ncols() != data.features.ncols() {
            return Err(Error::invalid(format!(
                "unlabeled rows have {} features, dataset has {}",
                u.ncols(),
                data.features.ncols()
            )));
        }
    }
    let sp = elicitation_splits(data, cfg);
    if sp.fit.len() < 2 {
        return Err(Error::invalid("too few rows left for training"));
    }
    let train_x = data.features.select_rows(&sp.train);
    let normalizer = MinMaxNormalizer::fit(&match unlabeled {
        Some(u) => stack_rows(&train_x, u),
        None => train_x,
    })?;
    let norm = normalizer.apply(&data.features);
    let x_fit = norm.select_rows(&sp.fit);
    let y_fit = data.labels.select_rows(&sp.fit);

    let pre_x = match unlabeled {
        Some(u) => stack_rows(&x_fit, &normalizer.apply(u)),
        None => x_fit.clone(),
    };
    let dbn = pretrain_dbn(&pre_x, &cfg.architecture(), &cfg.train)?;
    let kernels0 = heuristic_kernels(&dbn.forward_batch(&x_fit)?, &y_fit, cfg.pad_noise_var);
    let validation = (!sp.stop.is_empty())
        .then(|| (norm.select_rows(&sp.stop), data.labels.select_rows(&sp.stop)));
    let fe_ratio = match &validation {
        Some((vx, _)) => Some(free_energy_ratio(&dbn, &x_fit, vx)?),
        None => None,
    };
    let (dbn, kernels, report) = fine_tune(
        &dbn,
        &kernels0,
        &FineTuneData {
            train_x: x_fit,
            train_y: y_fit,
            validation,
        },
        &cfg.train,
    )?;
    Ok(DbnBundle {
        features: cfg.features,
        train: cfg.train.clone(),
        feature_map: DeepFeatureMap { normalizer, dbn },
        kernels,
        free_energy_ratio: fe_ratio,
        finetune: report,
    })
}

/// Conditions the PAD GPs on all training rows with the learned feature map.
pub fn fit_pad_gp(data: &ElicitationDataset, dbn: &DbnBundle, cfg: &PipelineConfig) -> Result<(PadGpBundle, PadGpModel)> {
    check_elicitation(data, cfg)?;
    if dbn.train != cfg.train || dbn.features != cfg.features {
        return Err(Error::invalid(
            "the DBN bundle was trained with a different feature or training config",
        ));
    }
    let sp = elicitation_splits(data, cfg);
    let train_x = data.features.select_rows(&sp.train);
    let train_labels = data.labels.select_rows(&sp.train);
    let model = PadGpModel::fit(dbn.feature_map.clone(), &train_x, &train_labels, &dbn.kernels)?;
    let train_mse = mse(&model.posterior_means(&train_x)?, &train_labels);
    let validation_mse = if sp.validation.is_empty() {
        None
    } else {
        let vx = data.features.select_rows(&sp.validation);
        Some(mse(&model.posterior_means(&vx)?, &data.labels.select_rows(&sp.validation)))
    };
    let bundle = PadGpBundle {
        features: cfg.features,
        feature_map: dbn.feature_map.clone(),
        kernels: dbn.kernels.clone(),
        train_features: train_x,
        train_labels,
        train_mse,
        validation_mse,
    };
    Ok((bundle, model))
}

/// [`train_dbn`] followed by [`fit_pad_gp`].
pub fn train_pad_model(data: &ElicitationDataset, cfg: &PipelineConfig) -> Result<PadTraining> {
    let dbn = train_dbn(data, cfg)?;
    let (pad, model) = fit_pad_gp(data, &dbn, cfg)?;
    Ok(PadTraining { dbn, pad, model })
}

/// LOO mean squared error of one GP, from a single factorization.
fn loo_mse(x: &DMatrix<f64>, y: &[f64], k: &KernelParams) -> Result<f64> {
    let mut g = gram(x, k);
    for i in 0..g.nrows() {
        g[(i, i)] += k.noise_var;
    }
    let target = nalgebra::DVector::from_column_slice(y);
    let f = GramFactor::new(&g, std::slice::from_ref(&target))?;
    let inv = f.inverse();
    let a = &inv * &target;
    Ok((0..y.len()).map(|i| (a[i] / inv[(i, i)]).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Kernel for one output chosen by LOO error over a log grid centred on the
/// median heuristic.
pub fn tune_rbf_loo(x: &DMatrix<f64>, y: &[f64], noise_var: f64, mode: ExecMode) -> Result<KernelParams> {
    let labels = DMatrix::from_column_slice(y.len(), 1, y);
    let start = heuristic_kernels(x, &labels, noise_var)[0];
    let alphas = log_grid(start.alpha / 30.0, start.alpha * 30.0, 15);
    let betas = log_grid(start.beta / 1000.0, start.beta * 100.0, 25);
    let n = betas.len();
    let scores = exec::map_range(mode, alphas.len() * n, |c| {
        let k = KernelParams {
            alpha: alphas[c / n],
            beta: betas[c % n],
            noise_var,
        };
        loo_mse(x, y, &k).unwrap_or(f64::INFINITY)
    });
    let best = (0..scores.len())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .filter(|&c| scores[c].is_finite())
        .ok_or_else(|| Error::numerical("no kernel on the baseline grid could be fitted"))?;
    Ok(KernelParams {
        alpha: alphas[best / n],
        beta: betas[best % n],
        noise_var,
    })
}

/// Validation MSE of independent RBF GPs on the raw (unscaled) features, with
/// kernels tuned by LOO on the training rows. Uses the same split as
/// [`train_pad_model`].
pub fn baseline_rbf_mse(data: &ElicitationDataset, cfg: &PipelineConfig, mode: ExecMode) -> Result<f64> {
    check_elicitation(data, cfg)?;
    let sp = elicitation_splits(data, cfg);
    let (train_rows, val_rows) = (sp.train, sp.validation);
    if val_rows.is_empty() {
        return Err(Error::invalid("baseline needs a non-empty validation split"));
    }
    let x = data.features.select_rows(&train_rows);
    let vx = data.features.select_rows(&val_rows);
    let mut sse = 0.0;
    for l in 0..PAD_DIMS {
        let y: Vec<f64> = train_rows.iter().map(|&i| data.labels[(i, l)]).collect();
        let k = tune_rbf_loo(&x, &y, cfg.pad_noise_var, mode)?;
        let gp = GpRegressor::fit(x.clone(), nalgebra::DVector::from_vec(y), k)?;
        for (r, &i) in val_rows.iter().enumerate() {
            let row: Vec<f64> = vx.row(r).iter().copied().collect();
            sse += (data.labels[(i, l)] - gp.mean(&row)?).powi(2);
        }
    }
    Ok(sse / (val_rows.len() * PAD_DIMS) as f64)
}

#[derive(Debug, Clone)]
pub struct PerfTraining {
    pub bundle: PerfGpBundle,
    pub model: PerfGpModel,
}

/// Predicted QoT means for raw feature rows.
pub fn predict_q(pad: &PadGpModel, perf: &PerfGpModel, features: &DMatrix<f64>) -> Result<Vec<f64>> {
    let means = pad.posterior_means(features)?;
    (0..means.nrows())
        .map(|r| perf.regressor().mean(&[means[(r, 0)], means[(r, 1)], means[(r, 2)]]))
        .collect()
}

/// Grid-searches the performance GP on PAD means predicted for the training
/// trials and reports the QoT error on held-out trials.
pub fn train_perf_model(
    data: &InductionDataset,
    pad: &PadGpModel,
    cfg: &PipelineConfig,
    mode: ExecMode,
) -> Result<PerfTraining> {
    cfg.validate()?;
    data.validate()?;
    if data.features.ncols() != pad.input_dim() {
        return Err(Error::invalid(format!(
            "induction data has {} features, PAD model expects {}",
            data.features.ncols(),
            pad.input_dim()
        )));
    }
    let (train_rows, val_rows) = split_indices(data.len(), cfg.validation_fraction, cfg.perf.seed, 2);
    let train_x = data.features.select_rows(&train_rows);
    let train_q: Vec<f64> = train_rows.iter().map(|&i| data.qot[i]).collect();
    let train_pad = pad.posterior_means(&train_x)?;
    let (model, grid) = fit_perf_gp(&train_pad, &train_q, &cfg.perf, mode)?;
    let sq = |rows: &[usize]| -> Result<f64> {
        let pred = predict_q(pad, &model, &data.features.select_rows(rows))?;
        Ok(rows.iter().zip(&pred).map(|(&i, p)| (data.qot[i] - p).powi(2)).sum::<f64>() / rows.len() as f64)
    };
    let train_mse = sq(&train_rows)?;
    let validation_mse = if val_rows.is_empty() { None } else { Some(sq(&val_rows)?) };
    Ok(PerfTraining {
        bundle: PerfGpBundle {
            kernel: *model.kernel(),
            train_pad,
            train_q,
            grid: Some(grid),
            train_mse,
            validation_mse,
        },
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_a_partition() {
        let (a, b) = split_indices(50, 0.2, 7, 0);
        assert_eq!(b.len(), 10);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(split_indices(50, 0.2, 7, 0), (a, b));
        assert_ne!(split_indices(50, 0.2, 7, 1).1, split_indices(50, 0.2, 7, 0).1);
    }

    #[test]
    fn default_architectures() {
        let mut cfg = PipelineConfig::default();
        assert_eq!(cfg.architecture(), vec![56, 80, 80, 80, 80]);
        cfg.features.mode = FeatureMode::Eeg;
        assert_eq!(cfg.architecture(), vec![14, 20, 20, 20, 20]);
    }
}
