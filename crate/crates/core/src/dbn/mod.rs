//! Deep belief network feature map for the latent-space kernel.
//!
//! Layers are pretrained greedily with CD-1 and then fine-tuned jointly with
//! the Gaussian-process kernel hyperparameters (see [`finetune`]).

pub mod finetune;
pub mod rbm;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::signal::FeatureVector;

pub use finetune::{fine_tune, loo_loss_and_grad, FineTuneData, FineTuneReport, LooGradient};
pub use rbm::{Cd1Stats, RbmLayer, RbmVelocity};

/// Update rule used by [`fine_tune`]. Both follow the annealed learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FineTuneOptimizer {
    /// Heavy-ball momentum with `TrainConfig::momentum`.
    Momentum,
    /// Per-parameter step sizes from running gradient moments.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_first_layer: f64,
    pub lr_upper_layers: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub seed: u64,
    pub init_std: f64,
    pub finetune_epochs: usize,
    pub finetune_lr_start: f64,
    pub finetune_lr_end: f64,
    pub patience: usize,
    pub finetune_optimizer: FineTuneOptimizer,
    /// L2 penalty on network weights during fine-tuning (biases and kernel
    /// hyperparameters are not decayed).
    pub finetune_weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_first_layer: 0.01,
            lr_upper_layers: 0.001,
            weight_decay: 0.0002,
            momentum: 0.1,
            epochs: 50,
            minibatch_size: 10,
            seed: 0,
            init_std: 0.01,
            finetune_epochs: 300,
            finetune_lr_start: 1e-1,
            finetune_lr_end: 1e-5,
            patience: 20,
            finetune_optimizer: FineTuneOptimizer::Momentum,
            finetune_weight_decay: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lr_first_layer", self.lr_first_layer),
            ("lr_upper_layers", self.lr_upper_layers),
            ("finetune_lr_start", self.finetune_lr_start),
            ("finetune_lr_end", self.finetune_lr_end),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.finetune_lr_start < self.finetune_lr_end {
            return Err(Error::invalid("finetune_lr_start must be >= finetune_lr_end"));
        }
        if !(self.weight_decay >= 0.0 && self.finetune_weight_decay >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::invalid("weight decays must be >= 0 and momentum in [0, 1)"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch_size must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate for fine-tuning epoch `epoch` of `total`, annealed linearly.
    pub fn finetune_lr(&self, epoch: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.finetune_lr_start;
        }
        let t = epoch as f64 / (total - 1) as f64;
        self.finetune_lr_start + t * (self.finetune_lr_end - self.finetune_lr_start)
    }
}

/// Stacked RBM weights. `architecture[0]` is the input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbnParams {
    pub architecture: Vec<usize>,
    pub layers: Vec<RbmLayer>,
}

/// Top-layer activation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl DbnParams {
    pub fn init(architecture: &[usize], std: f64, seed: u64) -> Result<Self> {
        if architecture.len() < 2 {
            return Err(Error::invalid("architecture needs an input width and at least one layer"));
        }
        if architecture.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut rng = stream_rng(seed, streams::INIT, 0);
        let layers = architecture
            .windows(2)
            .map(|w| RbmLayer::random(w[0], w[1], std, &mut rng))
            .collect();
        Ok(Self {
            architecture: architecture.to_vec(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.architecture[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.architecture.last().expect("non-empty architecture")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() + 1 != self.architecture.len() {
            return Err(Error::invalid("architecture and layer count disagree"));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            if layer.n_visible() != self.architecture[k] || layer.n_hidden() != self.architecture[k + 1] {
                return Err(Error::invalid(format!("layer {k} shape does not chain")));
            }
        }
        Ok(())
    }

    /// Mean-field pass for a batch (rows = samples). Returns every layer's
    /// activations, input first.
    pub fn forward_all(&self, input: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for layer in &self.layers {
            let next = layer.hidden_probs(acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    pub fn forward_batch(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        Ok(self.forward_all(input).pop().expect("non-empty"))
    }

    pub fn forward(&self, input: &[f64]) -> Result<LatentVector> {
        let m = DMatrix::from_row_slice(1, input.len(), input);
        let out = self.forward_batch(&m)?;
        Ok(LatentVector(out.iter().copied().collect()))
    }
}

/// Per-dimension min–max scaling to `[0, 1]` with training-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxNormalizer {
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::invalid("cannot fit normalizer on empty data"));
        }
        let min = data.column_iter().map(|c| c.min()).collect();
        let max = data.column_iter().map(|c| c.max()).collect();
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Constant training dimensions map to 0.
    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for r in 0..data.nrows() {
            let row: Vec<f64> = data.row(r).iter().copied().collect();
            for (c, v) in self.apply_row(&row).into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }
}

/// Normalizer plus network: `e ↦ Φ(e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFeatureMap {
    pub normalizer: MinMaxNormalizer,
    pub dbn: DbnParams,
}

impl DeepFeatureMap {
    pub fn map(&self, e: &FeatureVector) -> Result<LatentVector> {
        self.map_values(&e.values)
    }

    pub fn map_values(&self, e: &[f64]) -> Result<LatentVector> {
        if e.len() != self.dbn.input_dim() {
            return Err(Error::invalid(format!(
                "feature vector has {} entries, network expects {}",
                e.len(),
                self.dbn.input_dim()
            )));
        }
        self.dbn.forward(&self.normalizer.apply_row(e))
    }

    pub fn map_batch(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.dbn.forward_batch(&self.normalizer.apply(raw))
    }
}

/// Greedy layer-wise CD-1 pretraining. `dataset` rows are samples already
/// scaled to `[0, 1]`.
pub fn pretrain_dbn(dataset: &DMatrix<f64>, architecture: &[usize], cfg: &TrainConfig) -> Result<DbnParams> {
    cfg.validate()?;
    if dataset.nrows() == 0 {
        return Err(Error::invalid("empty pretraining dataset"));
    }
    if architecture.first() != Some(&dataset.ncols()) {
        return Err(Error::invalid(format!(
            "dataset has {} columns, architecture starts with {:?}",
            dataset.ncols(),
            architecture.first()
        )));
    }
    if dataset.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("pretraining data must be scaled to [0, 1]"));
    }
    let mut dbn = DbnParams::init(architecture, cfg.init_std, cfg.seed)?;
    let mut input = dataset.clone();
    let n = dataset.nrows();
    for k in 0..dbn.layers.len() {
        let lr = if k == 0 { cfg.lr_first_layer } else { cfg.lr_upper_layers };
        let mut rng = stream_rng(cfg.seed, streams::TRAIN, k as u64);
        let layer = &mut dbn.layers[k];
        let mut velocity = RbmVelocity::zeros_like(layer);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let batch = input.select_rows(chunk);
                layer.cd1_update(&mut velocity, &batch, lr, cfg, &mut rng)?;
            }
        }
        input = layer.hidden_probs(&input);
    }
    dbn.validate()?;
    Ok(dbn)
}

/// Mean free energy of `train` over mean free energy of `validation`, both
/// evaluated at the top RBM on mean-field inputs from the layers below.
pub fn free_energy_ratio(dbn: &DbnParams, train: &DMatrix<f64>, validation: &DMatrix<f64>) -> Result<f64> {
    if train.nrows() == 0 || validation.nrows() == 0 {
        return Err(Error::invalid("free energy ratio needs non-empty sets"));
    }
    if train.ncols() != dbn.input_dim() || validation.ncols() != dbn.input_dim() {
        return Err(Error::invalid("set width does not match network input"));
    }
    let top = dbn.layers.last().expect("validated dbn");
    let below = |x: &DMatrix<f64>| {
        let mut acts = dbn.forward_all(x);
        acts.truncate(dbn.layers.len());
        acts.pop().expect("non-empty")
    };
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let ft = mean(top.free_energy(&below(train)));
    let fv = mean(top.free_energy(&below(validation)));
    Ok(ft / fv)
}

/// Rows of feature vectors as a matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c])
}

pub fn column(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let mut dbn = DbnParams::init(&[4, 3, 2], 0.0, 1).unwrap();
        for l in &mut dbn.layers {
            *l = RbmLayer::zeros(l.n_visible(), l.n_hidden());
        }
        let out = dbn.forward(&[0.3, 0.1, 0.9, 0.0]).unwrap();
        assert_eq!(out.0, vec![0.5, 0.5]);
    }

    #[test]
    fn single_unit_closed_form() {
        let mut dbn = DbnParams::init(&[1, 1], 0.0, 1).unwrap();
        dbn.layers[0].weights[(0, 0)] = 1.7;
        let out = dbn.forward(&[0.4]).unwrap();
        assert_eq!(out.0[0], 1.0 / (1.0 + (-(1.7f64 * 0.4)).exp()));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let dbn = DbnParams::init(&[4, 3], 0.01, 1).unwrap();
        assert!(dbn.forward(&[0.1; 5]).is_err());
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let cfg = TrainConfig {
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let data = DMatrix::from_element(5, 14, 0.5);
        let dbn = pretrain_dbn(&data, &[14, 20], &cfg).unwrap();
        assert_eq!(dbn, DbnParams::init(&[14, 20], cfg.init_std, 9).unwrap());
    }

    #[test]
    fn pretrain_rejects_unscaled_and_empty() {
        let cfg = TrainConfig::default();
        assert!(pretrain_dbn(&DMatrix::zeros(0, 3), &[3, 2], &cfg).is_err());
        assert!(pretrain_dbn(&DMatrix::from_element(2, 3, 1.5), &[3, 2], &cfg).is_err());
    }

    #[test]
    fn lr_annealing_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.finetune_lr(0, 11), 1e-1);
        assert!((cfg.finetune_lr(10, 11) - 1e-5).abs() < 1e-15);
    }

    #[test]
    fn normalizer_handles_constant_column() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 3.0]);
        let n = MinMaxNormalizer::fit(&data).unwrap();
        assert_eq!(n.apply_row(&[1.5, 3.0]), vec![0.5, 0.0]);
    }
}
