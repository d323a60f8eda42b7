use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::operator::OperatorState;
use crate::error::{Error, Result};

pub const DEFAULT_Q_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QotSample {
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
}

/// `1 / (0.5 (p1 + p2))`, capped at `q_cap`.
pub fn qot(p1: f64, p2: f64, q_cap: f64) -> Result<f64> {
    if !(p1 >= 0.0 && p2 >= 0.0) || !p1.is_finite() || !p2.is_finite() {
        return Err(Error::invalid(format!("deviation rates must be finite and >= 0, got ({p1}, {p2})")));
    }
    if !(q_cap > 0.0) {
        return Err(Error::invalid(format!("q_cap must be > 0, got {q_cap}")));
    }
    let s = p1 + p2;
    if s < 2.0 / q_cap {
        return Ok(q_cap);
    }
    Ok(2.0 / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    /// Mean deviations per unit time for a neutral, rested operator.
    pub base_p1: f64,
    /// Mean maximum deviation distance for a neutral, rested operator.
    pub base_p2: f64,
    pub w_pad: f64,
    pub w_skill: f64,
    pub w_fatigue: f64,
    /// Log-normal noise on each deviation measure.
    pub noise_sd: f64,
    /// Relative difficulty of each tracking trajectory, cycled by index.
    pub trajectory_difficulty: Vec<f64>,
    pub q_cap: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            base_p1: 3.0,
            base_p2: 3.0,
            w_pad: 1.0,
            w_skill: 0.5,
            w_fatigue: 0.4,
            noise_sd: 0.15,
            trajectory_difficulty: vec![1.0],
            q_cap: DEFAULT_Q_CAP,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_p1 > 0.0 && self.base_p2 > 0.0) {
            return Err(Error::invalid("base deviation rates must be > 0"));
        }
        if [self.w_pad, self.w_skill, self.w_fatigue].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("performance weights must be >= 0"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd must be >= 0"));
        }
        if self.trajectory_difficulty.is_empty() || self.trajectory_difficulty.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("trajectory difficulties must be non-empty and > 0"));
        }
        if !(self.q_cap > 0.0) {
            return Err(Error::invalid("q_cap must be > 0"));
        }
        Ok(())
    }

    /// Performance drive: rises with mean PAD and skill, falls with fatigue.
    pub fn drive(&self, state: &OperatorState) -> f64 {
        let mean_pad = state.pad.iter().sum::<f64>() / 3.0;
        self.w_pad * (mean_pad - 5.0) / 4.0 + self.w_skill * (state.skill - 0.5) - self.w_fatigue * state.fatigue
    }
}

pub fn perform_trial<R: Rng + ?Sized>(
    state: &OperatorState,
    trajectory: usize,
    cfg: &TrialConfig,
    rng: &mut R,
) -> Result<QotSample> {
    let difficulty = cfg.trajectory_difficulty[trajectory % cfg.trajectory_difficulty.len()];
    let scale = difficulty * (-cfg.drive(state)).exp();
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    let p1 = cfg.base_p1 * scale * (cfg.noise_sd * n1).exp();
    let p2 = cfg.base_p2 * scale * (cfg.noise_sd * n2).exp();
    Ok(QotSample {
        p1,
        p2,
        q: qot(p1, p2, cfg.q_cap)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn qot_examples() {
        assert_eq!(qot(1.0, 1.0, 100.0).unwrap(), 1.0);
        assert_eq!(qot(3.0, 1.0, 100.0).unwrap(), 0.5);
        assert_eq!(qot(0.0, 0.0, 100.0).unwrap(), 100.0);
        assert!(qot(-1.0, 1.0, 100.0).is_err());
    }

    #[test]
    fn extremes_without_noise() {
        let cfg = TrialConfig {
            noise_sd: 0.0,
            ..TrialConfig::default()
        };
        let best = OperatorState::new([9.0; 3], 0.0, 0.5).unwrap();
        let worst = OperatorState::new([1.0; 3], 1.0, 0.5).unwrap();
        let mut rng = stream_rng(0, 0, 0);
        let hi = perform_trial(&best, 0, &cfg, &mut rng).unwrap();
        let lo = perform_trial(&worst, 0, &cfg, &mut rng).unwrap();
        assert!(hi.p1 < lo.p1 && hi.p2 < lo.p2 && hi.q > lo.q);
        let mid = OperatorState::new([5.0; 3], 0.5, 0.5).unwrap();
        let m = perform_trial(&mid, 0, &cfg, &mut rng).unwrap();
        assert!(lo.q < m.q && m.q < hi.q);
    }
}
