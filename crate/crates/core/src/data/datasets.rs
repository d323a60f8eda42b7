use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::gp::pad::{PAD_DIMS, PAD_MAX, PAD_MIN};
use super::files::FeatureTable;
use crate::rng::{derive_seed, stream_rng, streams};
use crate::signal::{extract_with, FeatureConfig, FeatureMode};
use crate::sim::{operator_step, perform_trial, synth_eeg, OperatorState, SimConfig};

/// PAD-labelled windows. One row per window.
#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationDataset {
    pub mode: FeatureMode,
    pub ids: Vec<String>,
    pub features: DMatrix<f64>,
    /// rows × (pleasure, arousal, dominance)
    pub labels: DMatrix<f64>,
}

/// Performance-labelled windows from one open-loop session.
#[derive(Debug, Clone, PartialEq)]
pub struct InductionDataset {
    pub mode: FeatureMode,
    pub trials: Vec<u64>,
    pub features: DMatrix<f64>,
    pub qot: Vec<f64>,
    /// PAD the operator was actually in; not visible to the models.
    pub pad_true: DMatrix<f64>,
}

impl ElicitationDataset {
    pub fn validate(&self) -> Result<()> {
        let m = self.features.nrows();
        if self.ids.len() != m || self.labels.nrows() != m {
            return Err(Error::invalid("elicitation rows disagree in count"));
        }
        if self.features.ncols() != self.mode.dim() {
            return Err(Error::invalid(format!(
                "{} feature columns for mode {}",
                self.features.ncols(),
                self.mode
            )));
        }
        if self.labels.ncols() != PAD_DIMS {
            return Err(Error::invalid("labels need 3 columns"));
        }
        if self.labels.iter().any(|v| !(PAD_MIN..=PAD_MAX).contains(v)) {
            return Err(Error::invalid("labels must lie in [1, 9]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            mode: self.mode,
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            features: self.features.select_rows(rows),
            labels: self.labels.select_rows(rows),
        }
    }
}

impl InductionDataset {
    pub fn validate(&self) -> Result<()> {
        let m = self.features.nrows();
        if self.trials.len() != m || self.qot.len() != m || self.pad_true.nrows() != m {
            return Err(Error::invalid("induction rows disagree in count"));
        }
        if self.features.ncols() != self.mode.dim() {
            return Err(Error::invalid(format!(
                "{} feature columns for mode {}",
                self.features.ncols(),
                self.mode
            )));
        }
        if self.qot.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            return Err(Error::invalid("QoT values must be > 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            mode: self.mode,
            trials: rows.iter().map(|&i| self.trials[i]).collect(),
            features: self.features.select_rows(rows),
            qot: rows.iter().map(|&i| self.qot[i]).collect(),
            pad_true: self.pad_true.select_rows(rows),
        }
    }
}

/// Latin-hypercube style labels: each axis is split into `m` strata, the
/// strata are shuffled independently per axis and jittered within.
pub fn stratified_labels(m: usize, seed: u64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, PAD_DIMS);
    let width = (PAD_MAX - PAD_MIN) / m as f64;
    for l in 0..PAD_DIMS {
        let mut rng = stream_rng(seed, streams::LABELS, l as u64);
        let mut strata: Vec<usize> = (0..m).collect();
        strata.shuffle(&mut rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u: f64 = rng.random();
            out[(i, l)] = PAD_MIN + width * (s as f64 + u);
        }
    }
    out
}

fn features_for(
    states: &[OperatorState],
    sim: &SimConfig,
    features: &FeatureConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<DMatrix<f64>> {
    let rows = exec::try_map_range(mode, states.len(), |i| {
        let w = synth_eeg(&states[i], sim, seed, i as u64)?;
        Ok::<_, Error>(extract_with(&w, features)?.values)
    })?;
    let dim = features.mode.dim();
    Ok(DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]))
}

pub fn generate_elicitation(
    sim: &SimConfig,
    features: &FeatureConfig,
    m: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<ElicitationDataset> {
    if m == 0 {
        return Err(Error::invalid("need at least one window"));
    }
    sim.validate()?;
    let labels = stratified_labels(m, seed);
    let states = (0..m)
        .map(|i| OperatorState::new([labels[(i, 0)], labels[(i, 1)], labels[(i, 2)]], 0.0, sim.operator.skill))
        .collect::<Result<Vec<_>>>()?;
    let feats = features_for(&states, sim, features, seed, mode)?;
    Ok(ElicitationDataset {
        mode: features.mode,
        ids: (0..m).map(|i| format!("e{i:04}")).collect(),
        features: feats,
        labels,
    })
}

/// Open-loop session: before each trial the operator sees a random
/// library-free stimulus with probability `sim.induction.stimulus_prob`.
pub fn generate_induction(
    sim: &SimConfig,
    features: &FeatureConfig,
    m: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<InductionDataset> {
    if m == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    sim.validate()?;
    let mut states = Vec::with_capacity(m);
    let mut qot = Vec::with_capacity(m);
    let mut state = sim.operator.initial_state()?;
    for k in 0..m as u64 {
        let trial = perform_trial(&state, k as usize, &sim.trial, &mut stream_rng(seed, streams::TRIAL, k))?;
        qot.push(trial.q);
        states.push(state);
        let mut rng = stream_rng(seed, streams::OPERATOR, k);
        let action = if rng.random::<f64>() < sim.induction.stimulus_prob {
            let target: [f64; 3] = std::array::from_fn(|_| rng.random_range(PAD_MIN..=PAD_MAX));
            std::array::from_fn(|l| target[l] - state.pad[l])
        } else {
            [0.0; 3]
        };
        state = operator_step(&state, &action, &sim.operator, &mut rng);
    }
    let feats = features_for(&states, sim, features, seed, mode)?;
    let pad_true = DMatrix::from_fn(m, PAD_DIMS, |r, c| states[r].pad[c]);
    Ok(InductionDataset {
        mode: features.mode,
        trials: (0..m as u64).collect(),
        features: feats,
        qot,
        pad_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_labels_cover_range() {
        let l = stratified_labels(50, 3);
        for c in 0..3 {
            let col = l.column(c);
            assert!(col.min() <= 2.0 && col.max() >= 8.0);
            let mut strata: Vec<usize> = col.iter().map(|v| ((v - 1.0) / 8.0 * 50.0) as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..50).collect::<Vec<_>>());
        }
    }
}

/// Features of an unlabeled open-loop session, recorded like the induction
/// session but from its own seed stream, for network pretraining.
pub fn generate_unlabeled(
    sim: &SimConfig,
    features: &FeatureConfig,
    m: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<FeatureTable> {
    let session = generate_induction(sim, features, m, derive_seed(seed, streams::PRETRAIN, 0), mode)?;
    Ok(FeatureTable {
        mode: session.mode,
        ids: (0..m).map(|i| format!("u{i:05}")).collect(),
        features: session.features,
    })
}
