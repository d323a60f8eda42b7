use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::pad::{PAD_MAX, PAD_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorState {
    pub pad: [f64; 3],
    pub fatigue: f64,
    pub skill: f64,
    pub k: u64,
}

impl OperatorState {
    pub fn new(pad: [f64; 3], fatigue: f64, skill: f64) -> Result<Self> {
        let s = Self { pad, fatigue, skill, k: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pad.iter().any(|v| !(PAD_MIN..=PAD_MAX).contains(v)) {
            return Err(Error::invalid(format!("PAD {:?} outside [1, 9]", self.pad)));
        }
        if !(0.0..=1.0).contains(&self.fatigue) || !(0.0..=1.0).contains(&self.skill) {
            return Err(Error::invalid("fatigue and skill must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    pub initial_pad: [f64; 3],
    pub skill: f64,
    /// Pull toward the baseline per step, in (0, 1).
    pub relax_rate: f64,
    pub rested_baseline: [f64; 3],
    /// How far each PAD axis of the baseline drops at full fatigue.
    pub fatigue_drop: [f64; 3],
    pub fatigue_rate: f64,
    /// Diagonal response gain to a stimulus.
    pub response_gain: [f64; 3],
    /// Saturation scale of the response.
    pub response_saturation: [f64; 3],
    pub pad_noise_sd: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            initial_pad: [5.5, 5.5, 5.5],
            skill: 0.5,
            relax_rate: 0.1,
            rested_baseline: [5.5, 5.5, 5.5],
            fatigue_drop: [2.5, 2.0, 2.0],
            fatigue_rate: 0.01,
            response_gain: [0.35, 0.35, 0.35],
            response_saturation: [3.0, 3.0, 3.0],
            pad_noise_sd: 0.15,
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relax_rate > 0.0 && self.relax_rate < 1.0) {
            return Err(Error::invalid("relax_rate must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.fatigue_rate) {
            return Err(Error::invalid("fatigue_rate must lie in [0, 1)"));
        }
        if self.response_gain.iter().any(|g| !(*g > 0.0)) || self.response_saturation.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("response gain and saturation must be > 0"));
        }
        if !(self.pad_noise_sd >= 0.0) {
            return Err(Error::invalid("pad_noise_sd must be >= 0"));
        }
        for l in 0..3 {
            let low = self.rested_baseline[l] - self.fatigue_drop[l];
            if !(PAD_MIN..=PAD_MAX).contains(&self.rested_baseline[l]) || !(PAD_MIN..=PAD_MAX).contains(&low) {
                return Err(Error::invalid("baseline must stay inside [1, 9] at every fatigue level"));
            }
        }
        self.initial_state().map(|_| ())
    }

    pub fn initial_state(&self) -> Result<OperatorState> {
        OperatorState::new(self.initial_pad, 0.0, self.skill)
    }

    pub fn baseline(&self, fatigue: f64) -> [f64; 3] {
        std::array::from_fn(|l| self.rested_baseline[l] - self.fatigue_drop[l] * fatigue)
    }
}

/// One step of the first-order PAD model. `action` is the differential pull
/// of the delivered stimulus (`rating - pad`), zero for no stimulus.
pub fn operator_step<R: Rng + ?Sized>(
    state: &OperatorState,
    action: &[f64; 3],
    cfg: &OperatorConfig,
    rng: &mut R,
) -> OperatorState {
    let base = cfg.baseline(state.fatigue);
    let mut pad = state.pad;
    for l in 0..3 {
        let s = cfg.response_saturation[l];
        let response = cfg.response_gain[l] * s * (action[l] / s).tanh();
        let noise: f64 = rng.sample(StandardNormal);
        pad[l] += cfg.relax_rate * (base[l] - pad[l]) + response + cfg.pad_noise_sd * noise;
        pad[l] = pad[l].clamp(PAD_MIN, PAD_MAX);
    }
    OperatorState {
        pad,
        fatigue: state.fatigue + cfg.fatigue_rate * (1.0 - state.fatigue),
        skill: state.skill,
        k: state.k + 1,
    }
}
