use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use padloop_core::controller::ControllerConfig;
use padloop_core::pipeline::PipelineConfig;
use padloop_core::signal::FeatureMode;
use padloop_core::sim::SimConfig;

use crate::CliError;

/// Environment variable that overrides `seed` from the config file. A
/// `--seed` flag still wins over both.
pub const SEED_ENV: &str = "PADLOOP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub elicitation: PathBuf,
    pub induction: PathBuf,
    /// Unlabeled feature rows for network pretraining.
    pub pretrain: PathBuf,
    pub model_dir: PathBuf,
    pub trace: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            elicitation: "data/elicitation.csv".into(),
            induction: "data/induction.csv".into(),
            pretrain: "data/pretrain.csv".into(),
            model_dir: "models".into(),
            trace: "trace.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: FeatureMode,
    pub elicitation_count: usize,
    pub induction_count: usize,
    /// Size of the unlabeled pretraining set; 0 pretrains on the labeled
    /// training rows only.
    pub pretrain_count: usize,
    pub horizon: usize,
    pub control_enabled: bool,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: FeatureMode::Bands,
            elicitation_count: 183,
            induction_count: 60,
            pretrain_count: 1000,
            horizon: 200,
            control_enabled: true,
            paths: Paths::default(),
            pipeline: PipelineConfig::default(),
            sim: SimConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads `path` if given, else the defaults; then applies the seed
    /// override from the environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not a non-negative integer")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }

    /// Pipeline settings with the run-level mode and seed folded in.
    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.features.mode = self.mode;
        p.train.seed = self.seed;
        p.perf.seed = self.seed;
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: padloop_core::Error| CliError::usage(e.to_string());
        self.pipeline().validate().map_err(usage)?;
        self.sim.validate().map_err(usage)?;
        self.controller.validate().map_err(usage)?;
        if self.horizon == 0 {
            return Err(CliError::usage("horizon must be >= 1"));
        }
        if self.elicitation_count == 0 || self.induction_count == 0 {
            return Err(CliError::usage("dataset counts must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("seed = 1\nsede = 2\n").is_err());
        assert!(RunConfig::from_toml("[sim.operator]\nskil = 0.3\n").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("mode = \"eeg\"\nhorizon = 12\n").unwrap();
        assert_eq!(cfg.mode, FeatureMode::Eeg);
        assert_eq!(cfg.horizon, 12);
        assert_eq!(cfg.pipeline().architecture(), vec![14, 20, 20, 20, 20]);
    }

    #[test]
    fn non_monotone_rule_table_rejected() {
        let mut cfg = RunConfig::default();
        cfg.controller.rules.cells[0][0] = padloop_core::controller::OutputLabel::Z;
        assert!(cfg.validate().is_err());
    }
}
