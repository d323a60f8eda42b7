//! Synthetic operator and plant: PAD dynamics, tracking performance, EEG
//! synthesis and the closed control loop.

pub mod eeg;
pub mod operator;
pub mod trial;

use serde::{Deserialize, Serialize};

pub use eeg::{synth_window, EegSynthConfig};
pub use operator::{operator_step, OperatorConfig, OperatorState};
pub use trial::{perform_trial, qot, QotSample, TrialConfig, DEFAULT_Q_CAP};

use crate::controller::{controller_step, ControllerConfig, NULL_STIMULUS_ID};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::gp::pad::{PadGpModel, PadPosterior};
use crate::gp::perf::{qot_posterior, PerfGpModel, QotPosterior};
use crate::rng::{stream_rng, streams};
use crate::signal::{extract_with, EegWindow, FeatureConfig, FeatureVector};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub operator: OperatorConfig,
    pub trial: TrialConfig,
    pub eeg: EegSynthConfig,
    pub induction: InductionConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.operator.validate()?;
        self.trial.validate()?;
        self.eeg.validate()?;
        if !(0.0..=1.0).contains(&self.induction.stimulus_prob) {
            return Err(Error::invalid("induction.stimulus_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Stimulus exposure used when recording the induction session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InductionConfig {
    pub stimulus_prob: f64,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self { stimulus_prob: 0.5 }
    }
}

/// Window for `state`, drawn from the EEG stream at `(seed, step)`.
pub fn synth_eeg(state: &OperatorState, cfg: &SimConfig, seed: u64, step: u64) -> Result<EegWindow> {
    state.validate()?;
    let mut rng = stream_rng(seed, streams::EEG, step);
    synth_window(format!("s{seed}-k{step}"), &state.pad, &cfg.eeg, &mut rng)
}

/// Fitted models the loop needs.
#[derive(Debug, Clone, Copy)]
pub struct LoopModels<'a> {
    pub pad_gp: &'a PadGpModel,
    pub perf_gp: &'a PerfGpModel,
    pub features: &'a FeatureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: u64,
    pub features: Vec<f64>,
    pub pad_post: PadPosterior,
    pub qot_post: QotPosterior,
    pub prob: f64,
    /// PAD at which the window was recorded.
    pub pad_true: [f64; 3],
    pub fatigue: f64,
    /// Performance on the trial that follows the control decision.
    pub q_true: f64,
    pub eps: f64,
    pub delta: f64,
    pub gate: u8,
    pub stimulus_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMeta {
    pub seed: u64,
    pub horizon: usize,
    pub control_enabled: bool,
    pub feature_mode: String,
    /// Set when a step failed; the trace holds the steps before it.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub meta: LoopMeta,
    pub steps: Vec<TraceStep>,
}

impl LoopTrace {
    pub fn is_complete(&self) -> bool {
        self.meta.aborted.is_none() && self.steps.len() == self.meta.horizon
    }

    pub fn mean_q(&self) -> f64 {
        self.steps.iter().map(|s| s.q_true).sum::<f64>() / self.steps.len().max(1) as f64
    }

    /// Fraction of steps with `q_true >= q_r`.
    pub fn frac_at_least(&self, q_r: f64) -> f64 {
        self.steps.iter().filter(|s| s.q_true >= q_r).count() as f64 / self.steps.len().max(1) as f64
    }

    pub fn stimulus_count(&self) -> usize {
        self.steps.iter().filter(|s| s.stimulus_id != NULL_STIMULUS_ID).count()
    }
}

fn loop_step(
    state: &OperatorState,
    prev_eps: Option<f64>,
    models: &LoopModels<'_>,
    sim: &SimConfig,
    ctrl: &ControllerConfig,
    control_enabled: bool,
    seed: u64,
) -> Result<(TraceStep, OperatorState)> {
    let k = state.k;
    let window = synth_eeg(state, sim, seed, k)?;
    let features: FeatureVector = extract_with(&window, models.features)?;
    let pad_post = models.pad_gp.posterior(&features)?;
    let qot_post = qot_posterior(models.perf_gp, &pad_post)?;
    let step = controller_step(&qot_post, prev_eps, ctrl)?;
    let (gate, stimulus_id) = if control_enabled {
        (step.action.gate, step.action.stimulus_id)
    } else {
        (0, NULL_STIMULUS_ID)
    };
    let action = match ctrl.stimuli.get(stimulus_id) {
        Some(s) => std::array::from_fn(|l| s.pad[l] - state.pad[l]),
        None => [0.0; 3],
    };
    let next = operator_step(state, &action, &sim.operator, &mut stream_rng(seed, streams::OPERATOR, k));
    let trial = perform_trial(&next, k as usize, &sim.trial, &mut stream_rng(seed, streams::TRIAL, k))?;
    Ok((
        TraceStep {
            k,
            features: features.values,
            pad_post,
            qot_post,
            prob: step.prob,
            pad_true: state.pad,
            fatigue: state.fatigue,
            q_true: trial.q,
            eps: step.eps,
            delta: step.delta,
            gate,
            stimulus_id,
        },
        next,
    ))
}

/// Runs the loop for `horizon` steps. Controller output is replaced by the
/// null stimulus when `control_enabled` is false; everything else, including
/// all noise, is identical between the two settings for a given seed.
pub fn run_closed_loop(
    models: LoopModels<'_>,
    sim: &SimConfig,
    ctrl: &ControllerConfig,
    horizon: usize,
    control_enabled: bool,
    seed: u64,
) -> Result<LoopTrace> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be >= 1"));
    }
    sim.validate()?;
    ctrl.validate()?;
    if models.pad_gp.input_dim() != models.features.mode.dim() {
        return Err(Error::invalid(format!(
            "PAD model expects {} features but the feature config produces {}",
            models.pad_gp.input_dim(),
            models.features.mode.dim()
        )));
    }
    let mut meta = LoopMeta {
        seed,
        horizon,
        control_enabled,
        feature_mode: models.features.mode.as_str().to_string(),
        aborted: None,
    };
    let mut steps = Vec::with_capacity(horizon);
    let mut state = sim.operator.initial_state()?;
    let mut prev_eps = None;
    for _ in 0..horizon {
        match loop_step(&state, prev_eps, &models, sim, ctrl, control_enabled, seed) {
            Ok((row, next)) => {
                prev_eps = Some(row.eps);
                steps.push(row);
                state = next;
            }
            Err(e) => {
                meta.aborted = Some(format!("step {}: {e}", state.k));
                break;
            }
        }
    }
    Ok(LoopTrace { meta, steps })
}

/// Control-on and control-off traces for each seed.
pub fn run_paired(
    models: LoopModels<'_>,
    sim: &SimConfig,
    ctrl: &ControllerConfig,
    horizon: usize,
    seeds: &[u64],
    mode: ExecMode,
) -> Result<Vec<(LoopTrace, LoopTrace)>> {
    exec::try_map_range(mode, seeds.len(), |i| {
        let on = run_closed_loop(models, sim, ctrl, horizon, true, seeds[i])?;
        let off = run_closed_loop(models, sim, ctrl, horizon, false, seeds[i])?;
        Ok((on, off))
    })
}
