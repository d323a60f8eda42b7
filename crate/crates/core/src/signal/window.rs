use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Emotiv-style 14-electrode montage, in acquisition order.
pub const CHANNEL_LABELS: [&str; 14] = [
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
];
pub const N_CHANNELS: usize = 14;
pub const SAMPLE_RATE: f64 = 128.0;
pub const WINDOW_SECONDS: usize = 10;
pub const WINDOW_LEN: usize = 1280;

/// A block of multichannel EEG, channels × time, in microvolts.
///
/// [`EegWindow::new`] enforces the standard 14 × 1280 @ 128 Hz layout used by
/// the feature pipeline. [`EegWindow::with_layout`] admits any rectangular,
/// finite block so that the individual preprocessing steps can be applied to
/// smaller montages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegWindow {
    pub id: String,
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
    channel_labels: Vec<String>,
}

impl EegWindow {
    pub fn new(id: impl Into<String>, samples: Vec<Vec<f64>>) -> Result<Self> {
        let labels = CHANNEL_LABELS.iter().map(|s| s.to_string()).collect();
        let w = Self::with_layout(id, labels, samples, SAMPLE_RATE)?;
        w.check_standard()?;
        Ok(w)
    }

    pub fn with_layout(
        id: impl Into<String>,
        channel_labels: Vec<String>,
        samples: Vec<Vec<f64>>,
        sample_rate: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("window has no channels"));
        }
        if channel_labels.len() != samples.len() {
            return Err(Error::invalid(format!(
                "{} channel labels for {} channels",
                channel_labels.len(),
                samples.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample rate {sample_rate}")));
        }
        let len = samples[0].len();
        for (label, row) in channel_labels.iter().zip(&samples) {
            if row.len() != len {
                return Err(Error::invalid(format!(
                    "channel {label} has {} samples, expected {len}",
                    row.len()
                )));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite sample in channel {label} at index {t}"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_rate,
            channel_labels,
        })
    }

    /// Checks the 14-channel, 10 s, 128 Hz layout.
    pub fn check_standard(&self) -> Result<()> {
        if self.samples.len() != N_CHANNELS {
            return Err(Error::invalid(format!(
                "expected {N_CHANNELS} channels, got {}",
                self.samples.len()
            )));
        }
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "expected {SAMPLE_RATE} Hz, got {}",
                self.sample_rate
            )));
        }
        if self.len() != WINDOW_LEN {
            return Err(Error::invalid(format!(
                "expected {WINDOW_LEN} samples per channel, got {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same metadata, new sample block. Shape must match.
    pub(crate) fn map_channels<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let samples = self
            .samples
            .iter()
            .map(|row| f(row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: self.id.clone(),
            samples,
            sample_rate: self.sample_rate,
            channel_labels: self.channel_labels.clone(),
        })
    }
}

/// Common average reference: subtracts the cross-channel mean at every time
/// index.
pub fn car_filter(window: &EegWindow) -> Result<EegWindow> {
    let n_ch = window.n_channels();
    if n_ch < 2 {
        return Err(Error::invalid(format!(
            "CAR needs at least 2 channels, got {n_ch}"
        )));
    }
    let len = window.len();
    let mut mean = vec![0.0; len];
    for row in window.samples() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / n_ch as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    window.map_channels(|row| Ok(row.iter().zip(&mean).map(|(v, m)| v - m).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    #[test]
    fn standard_layout_enforced() {
        let ok = vec![vec![0.0; WINDOW_LEN]; N_CHANNELS];
        assert!(EegWindow::new("w", ok).is_ok());
        let short = vec![vec![0.0; WINDOW_LEN - 1]; N_CHANNELS];
        assert!(EegWindow::new("w", short).is_err());
        let few = vec![vec![0.0; WINDOW_LEN]; 13];
        assert!(EegWindow::new("w", few).is_err());
        let mut nan = vec![vec![0.0; WINDOW_LEN]; N_CHANNELS];
        nan[3][17] = f64::NAN;
        assert!(EegWindow::new("w", nan).is_err());
    }

    #[test]
    fn car_removes_common_mode() {
        let row: Vec<f64> = (0..64).map(|t| (t as f64 * 0.3).sin() * 40.0).collect();
        let w = EegWindow::with_layout("w", labels(5), vec![row; 5], 128.0).unwrap();
        let out = car_filter(&w).unwrap();
        assert!(out.samples().iter().flatten().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn car_two_channels() {
        let a = vec![1.0, 4.0, -2.0];
        let b = vec![3.0, 0.0, 5.0];
        let w = EegWindow::with_layout("w", labels(2), vec![a.clone(), b.clone()], 128.0).unwrap();
        let out = car_filter(&w).unwrap();
        for t in 0..3 {
            assert_eq!(out.channel(0)[t], (a[t] - b[t]) / 2.0);
            assert_eq!(out.channel(1)[t], (b[t] - a[t]) / 2.0);
        }
    }

    #[test]
    fn car_rejects_single_channel() {
        let w = EegWindow::with_layout("w", labels(1), vec![vec![1.0; 8]], 128.0).unwrap();
        assert!(matches!(car_filter(&w), Err(Error::InvalidInput(_))));
    }
}
