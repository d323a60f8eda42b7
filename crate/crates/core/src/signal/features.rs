use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dwt::{band_reconstruct, dwt_decompose};
use super::filter::{bandpass, DEFAULT_HIGH_HZ, DEFAULT_LOW_HZ};
use super::higuchi::{higuchi_fd, DEFAULT_K_MAX};
use super::window::{car_filter, EegWindow, N_CHANNELS};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Band order within each channel block of a [`FeatureMode::Bands`] vector.
pub const BAND_NAMES: [&str; 4] = ["theta", "alpha", "beta", "gamma"];
/// DWT detail level carrying each entry of [`BAND_NAMES`].
pub const BAND_LEVELS: [usize; 4] = [4, 3, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One FD per channel (14 values).
    Eeg,
    /// One FD per channel and band, channel-major then theta→gamma (56 values).
    Bands,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Eeg => N_CHANNELS,
            FeatureMode::Bands => N_CHANNELS * BAND_NAMES.len(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Eeg => "eeg",
            FeatureMode::Bands => "bands",
        }
    }

    /// Column names in vector order.
    pub fn feature_names(self) -> Vec<String> {
        use super::window::CHANNEL_LABELS;
        match self {
            FeatureMode::Eeg => CHANNEL_LABELS.iter().map(|c| format!("fd_{c}")).collect(),
            FeatureMode::Bands => CHANNEL_LABELS
                .iter()
                .flat_map(|c| BAND_NAMES.iter().map(move |b| format!("fd_{c}_{b}")))
                .collect(),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eeg" => Ok(FeatureMode::Eeg),
            "bands" => Ok(FeatureMode::Bands),
            other => Err(Error::invalid(format!("unknown feature mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub k_max: usize,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Bands,
            k_max: DEFAULT_K_MAX,
            low_hz: DEFAULT_LOW_HZ,
            high_hz: DEFAULT_HIGH_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub window_id: String,
    pub mode: FeatureMode,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(window_id: impl Into<String>, mode: FeatureMode, values: Vec<f64>) -> Result<Self> {
        if values.len() != mode.dim() {
            return Err(Error::invalid(format!(
                "{mode} feature vector needs {} values, got {}",
                mode.dim(),
                values.len()
            )));
        }
        Ok(Self {
            window_id: window_id.into(),
            mode,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// CAR → band-pass → (DWT bands) → Higuchi FD.
pub fn extract_features(window: &EegWindow, mode: FeatureMode, k_max: usize) -> Result<FeatureVector> {
    extract_with(
        window,
        &FeatureConfig {
            mode,
            k_max,
            ..FeatureConfig::default()
        },
    )
}

pub fn extract_with(window: &EegWindow, cfg: &FeatureConfig) -> Result<FeatureVector> {
    window.check_standard()?;
    let referenced = car_filter(window)?;
    let filtered = bandpass(&referenced, cfg.low_hz, cfg.high_hz)?;
    let mut values = Vec::with_capacity(cfg.mode.dim());
    for (ch, row) in filtered.samples().iter().enumerate() {
        let label = &window.channel_labels()[ch];
        match cfg.mode {
            FeatureMode::Eeg => values.push(
                higuchi_fd(row, cfg.k_max).map_err(|e| annotate(e, &window.id, label, None))?,
            ),
            FeatureMode::Bands => {
                let dec = dwt_decompose(row)?;
                for (name, level) in BAND_NAMES.iter().zip(BAND_LEVELS) {
                    let band = band_reconstruct(&dec, level)?;
                    values.push(
                        higuchi_fd(&band, cfg.k_max)
                            .map_err(|e| annotate(e, &window.id, label, Some(name)))?,
                    );
                }
            }
        }
    }
    FeatureVector::new(window.id.clone(), cfg.mode, values)
}

fn annotate(e: Error, window: &str, channel: &str, band: Option<&str>) -> Error {
    match e {
        Error::Degenerate(msg) => Error::Degenerate(match band {
            Some(b) => format!("window {window}, channel {channel}, band {b}: {msg}"),
            None => format!("window {window}, channel {channel}: {msg}"),
        }),
        other => other,
    }
}

/// Extracts features for many windows; results are in input order.
pub fn extract_batch(
    windows: &[EegWindow],
    cfg: &FeatureConfig,
    mode: ExecMode,
) -> Result<Vec<FeatureVector>> {
    exec::try_map_range(mode, windows.len(), |i| extract_with(&windows[i], cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_dims() {
        assert_eq!(FeatureMode::Eeg.feature_names().len(), 14);
        let names = FeatureMode::Bands.feature_names();
        assert_eq!(names.len(), 56);
        assert_eq!(names[0], "fd_AF3_theta");
        assert_eq!(names[3], "fd_AF3_gamma");
        assert_eq!(names[4], "fd_F7_theta");
    }

    #[test]
    fn mode_parse() {
        assert_eq!("BANDS".parse::<FeatureMode>().unwrap(), FeatureMode::Bands);
        assert!("delta".parse::<FeatureMode>().is_err());
    }

    #[test]
    fn vector_length_checked() {
        assert!(FeatureVector::new("w", FeatureMode::Eeg, vec![1.5; 56]).is_err());
    }
}
