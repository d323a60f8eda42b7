//! Fuzzy performance controller: standardized error, max–min inference,
//! centroid defuzzification and nearest-stimulus selection.

pub mod fuzzy;

use serde::{Deserialize, Serialize};

pub use fuzzy::{defuzzify, fuzzy_infer, FuzzyPartition, OutputLabel, RuleTable, Triangle, INPUT_LABELS};

use crate::error::{Error, Result};
use crate::gp::pad::{PAD_MAX, PAD_MIN};
use crate::gp::perf::{prob_q_at_least, QotPosterior};

pub const NULL_STIMULUS_ID: u32 = 0;
pub const NEUTRAL_PAD: [f64; 3] = [4.5, 4.5, 4.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stimulus {
    pub id: u32,
    pub pad: [f64; 3],
}

/// Rated stimuli. The null stimulus (id 0, no stimulation) is implicit and
/// always available; `entries` holds only the real ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StimulusLibrary {
    pub entries: Vec<Stimulus>,
}

impl StimulusLibrary {
    pub fn new(entries: Vec<Stimulus>) -> Result<Self> {
        let lib = Self { entries };
        lib.validate()?;
        Ok(lib)
    }

    /// Grid over six rating levels per axis.
    pub fn default_grid() -> Self {
        const LEVELS: [f64; 6] = [1.5, 3.0, 4.5, 5.75, 7.0, 8.5];
        let mut entries = Vec::with_capacity(216);
        for p in LEVELS {
            for a in LEVELS {
                for d in LEVELS {
                    entries.push(Stimulus {
                        id: entries.len() as u32 + 1,
                        pad: [p, a, d],
                    });
                }
            }
        }
        Self { entries }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.entries.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate stimulus id"));
        }
        for s in &self.entries {
            if s.id == NULL_STIMULUS_ID {
                return Err(Error::invalid("stimulus id 0 is reserved for the null stimulus"));
            }
            if s.pad.iter().any(|v| !(PAD_MIN..=PAD_MAX).contains(v)) {
                return Err(Error::invalid(format!("stimulus {} rating {:?} outside [1, 9]", s.id, s.pad)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, id: u32) -> Option<&Stimulus> {
        self.entries.iter().find(|s| s.id == id)
    }

    /// Closest entry to `target`; ties go to the lowest id.
    pub fn nearest(&self, target: &[f64; 3]) -> Option<&Stimulus> {
        let dist = |s: &Stimulus| -> f64 { s.pad.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum() };
        self.entries.iter().min_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.id.cmp(&b.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub q_r: f64,
    pub beta_r: f64,
    pub f_r: [f64; 3],
    pub error_partition: FuzzyPartition,
    pub delta_partition: FuzzyPartition,
    pub rules: RuleTable,
    /// Differential PAD centres for Z, N, S, M, L, LL.
    pub centers: [[f64; 3]; 6],
    pub stimuli: StimulusLibrary,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            q_r: 0.35,
            beta_r: 0.9,
            f_r: NEUTRAL_PAD,
            error_partition: FuzzyPartition::symmetric(1.0),
            delta_partition: FuzzyPartition::symmetric(0.5),
            rules: RuleTable::standard(),
            centers: [[0.0; 3], [0.5; 3], [1.25; 3], [2.0; 3], [3.0; 3], [4.0; 3]],
            stimuli: StimulusLibrary::default_grid(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_r > 0.0 && self.q_r.is_finite()) {
            return Err(Error::invalid(format!("q_r must be > 0, got {}", self.q_r)));
        }
        if !(self.beta_r > 0.0 && self.beta_r < 1.0) {
            return Err(Error::invalid(format!("beta_r must lie in (0, 1), got {}", self.beta_r)));
        }
        if self.f_r.iter().any(|v| !(PAD_MIN..=PAD_MAX).contains(v)) {
            return Err(Error::invalid("f_r must lie in [1, 9]^3"));
        }
        if self.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("output centres must be finite"));
        }
        self.error_partition.validate()?;
        self.delta_partition.validate()?;
        self.rules.validate()?;
        self.stimuli.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("controller config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub pad_value: [f64; 3],
    pub stimulus_id: u32,
    pub gate: u8,
}

impl ControlAction {
    pub fn null() -> Self {
        Self {
            pad_value: [0.0; 3],
            stimulus_id: NULL_STIMULUS_ID,
            gate: 0,
        }
    }

    pub fn is_null(&self) -> bool {
        self.stimulus_id == NULL_STIMULUS_ID
    }
}

/// Everything a controller step computed, for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerStep {
    pub action: ControlAction,
    pub prob: f64,
    pub eps: f64,
    pub delta: f64,
    pub tau: [f64; 6],
}

pub fn standardized_error(q_mean: f64, cfg: &ControllerConfig) -> f64 {
    q_mean / cfg.q_r - cfg.beta_r
}

/// `None` marks the first step.
pub fn delta_error(eps_k: f64, eps_prev: Option<f64>) -> f64 {
    match eps_prev {
        Some(p) => eps_k - p,
        None => 0.0,
    }
}

pub fn gate(prob: f64, cfg: &ControllerConfig) -> u8 {
    u8::from(prob < cfg.beta_r)
}

pub fn select_stimulus(u_hat: [f64; 3], lib: &StimulusLibrary, gate: u8, f_r: &[f64; 3]) -> ControlAction {
    if gate == 0 || u_hat == [0.0; 3] {
        return ControlAction {
            pad_value: u_hat,
            stimulus_id: NULL_STIMULUS_ID,
            gate,
        };
    }
    let target = [f_r[0] + u_hat[0], f_r[1] + u_hat[1], f_r[2] + u_hat[2]];
    let stimulus_id = lib.nearest(&target).map_or(NULL_STIMULUS_ID, |s| s.id);
    ControlAction {
        pad_value: u_hat,
        stimulus_id,
        gate,
    }
}

pub fn controller_step(qot: &QotPosterior, prev_eps: Option<f64>, cfg: &ControllerConfig) -> Result<ControllerStep> {
    if !qot.mean.is_finite() || !(qot.var >= 0.0) {
        return Err(Error::invalid(format!("bad performance posterior {qot:?}")));
    }
    let prob = prob_q_at_least(qot, cfg.q_r);
    let g = gate(prob, cfg);
    let eps = standardized_error(qot.mean, cfg);
    let delta = delta_error(eps, prev_eps);
    let mu = cfg.error_partition.fuzzify(eps);
    let pi = cfg.delta_partition.fuzzify(delta);
    let tau = fuzzy_infer(&mu, &pi, &cfg.rules);
    let u_hat = if g == 0 { [0.0; 3] } else { defuzzify(&tau, &cfg.centers) };
    Ok(ControllerStep {
        action: select_stimulus(u_hat, &cfg.stimuli, g, &cfg.f_r),
        prob,
        eps,
        delta,
        tau,
    })
}
