//! Synthetic EEG whose per-band roughness tracks the operator's PAD state.
//!
//! Each channel is a sum of four band-limited Gaussian noise components
//! (theta, alpha, beta, gamma). Inside a band the power spectrum falls off as
//! `f^-γ`, and `γ` moves affinely with PAD. A flatter spectrum gives a
//! rougher trace and so a higher fractal dimension once the band is isolated
//! again. Band RMS levels are fixed, so the whole-signal roughness mixes the
//! four bands and carries less of the PAD signal than the bands do.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::window::{EegWindow, CHANNEL_LABELS, N_CHANNELS, SAMPLE_RATE, WINDOW_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EegSynthConfig {
    /// Band edges in Hz, theta..gamma.
    pub band_edges: [[f64; 2]; 4],
    pub band_rms: [f64; 4],
    /// Spectral exponent at neutral PAD (5, 5, 5).
    pub base_exponent: [f64; 4],
    /// Exponent change per unit of `(pad - 5) / 4`, indexed
    /// `[channel][band][pad axis]`.
    pub pad_weights: [[[f64; 3]; 4]; N_CHANNELS],
    pub exponent_range: [f64; 2],
    pub white_noise_sd: f64,
    pub common_mode_sd: f64,
}

/// Frontal sites follow pleasure, temporal/parietal sites follow arousal and
/// fronto-central/occipital sites follow dominance. Within a site the theta
/// and alpha exponents move together; arousal also flattens beta and gamma
/// everywhere.
fn default_pad_weights() -> [[[f64; 3]; 4]; N_CHANNELS] {
    const THETA: f64 = 6.0;
    const ALPHA: f64 = 2.0;
    let mut w = [[[0.0; 3]; 4]; N_CHANNELS];
    for (ch, label) in CHANNEL_LABELS.iter().enumerate() {
        let (axis, sign) = match *label {
            "AF3" | "F7" | "F3" | "F4" | "F8" | "AF4" => (0, -1.0),
            "T7" | "P7" | "P8" | "T8" => (1, -1.0),
            _ => (2, 1.0),
        };
        w[ch][0][axis] = sign * THETA;
        w[ch][1][axis] = sign * ALPHA;
        w[ch][2][1] = -2.0;
        w[ch][3][1] = -3.0;
    }
    w
}

impl Default for EegSynthConfig {
    fn default() -> Self {
        Self {
            band_edges: [[4.0, 8.0], [8.0, 16.0], [16.0, 32.0], [32.0, 64.0]],
            band_rms: [10.0, 7.0, 4.0, 2.5],
            base_exponent: [0.0; 4],
            pad_weights: default_pad_weights(),
            exponent_range: [-10.0, 10.0],
            white_noise_sd: 0.5,
            common_mode_sd: 5.0,
        }
    }
}

impl EegSynthConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = SAMPLE_RATE / 2.0;
        for [lo, hi] in self.band_edges {
            if !(lo > 0.0 && lo < hi && hi <= nyquist) {
                return Err(Error::invalid(format!("band [{lo}, {hi}] must satisfy 0 < lo < hi <= {nyquist}")));
            }
        }
        if self.band_rms.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("band_rms must be finite and >= 0"));
        }
        if !(self.white_noise_sd >= 0.0 && self.common_mode_sd >= 0.0) {
            return Err(Error::invalid("noise levels must be >= 0"));
        }
        if !(self.exponent_range[0] < self.exponent_range[1]) {
            return Err(Error::invalid("exponent_range must be increasing"));
        }
        let weights = self.pad_weights.iter().flatten().flatten();
        if self.base_exponent.iter().chain(weights).any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthesizer weights must be finite"));
        }
        Ok(())
    }

    /// Spectral exponent for `(channel, band)` at `pad`.
    pub fn exponent(&self, channel: usize, band: usize, pad: &[f64; 3]) -> f64 {
        let w = &self.pad_weights[channel][band];
        let shift: f64 = (0..3).map(|l| w[l] * (pad[l] - 5.0) / 4.0).sum();
        let [lo, hi] = self.exponent_range;
        (self.base_exponent[band] + shift).clamp(lo, hi)
    }
}

/// One window for an operator at `pad`. Same `pad` and rng state give the
/// same window.
pub fn synth_window<R: Rng + ?Sized>(
    id: impl Into<String>,
    pad: &[f64; 3],
    cfg: &EegSynthConfig,
    rng: &mut R,
) -> Result<EegWindow> {
    let n = WINDOW_LEN;
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let bin_hz = SAMPLE_RATE / n as f64;
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let mut channels = Vec::with_capacity(N_CHANNELS);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for ch in 0..N_CHANNELS {
        spectrum.fill(Complex::new(0.0, 0.0));
        for band in 0..4 {
            let [lo, hi] = cfg.band_edges[band];
            let first = (lo / bin_hz).ceil() as usize;
            let last = (((hi / bin_hz).ceil() as usize).min(n / 2)).max(first);
            let gamma = cfg.exponent(ch, band, pad);
            let mut coeffs = Vec::with_capacity(last - first);
            let mut energy = 0.0;
            for k in first..last {
                let amp = (k as f64 * bin_hz).powf(-gamma / 2.0);
                let z = Complex::new(normal(), normal()) * (amp / std::f64::consts::SQRT_2);
                energy += 2.0 * z.norm_sqr();
                coeffs.push(z);
            }
            // time-domain mean square is energy / n^2
            let scale = if energy > 0.0 {
                cfg.band_rms[band] * n as f64 / energy.sqrt()
            } else {
                0.0
            };
            for (k, z) in (first..last).zip(coeffs) {
                spectrum[k] += z * scale;
                spectrum[n - k] += z.conj() * scale;
            }
        }
        fft.process(&mut spectrum);
        channels.push(spectrum.iter().map(|c| c.re / n as f64).collect::<Vec<f64>>());
    }
    for row in channels.iter_mut() {
        for v in row.iter_mut() {
            *v += cfg.white_noise_sd * normal();
        }
    }
    if cfg.common_mode_sd > 0.0 {
        for t in 0..n {
            let c = cfg.common_mode_sd * normal();
            for row in channels.iter_mut() {
                row[t] += c;
            }
        }
    }
    EegWindow::new(id, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn band_rms_is_honoured() {
        let cfg = EegSynthConfig {
            band_rms: [0.0, 3.0, 0.0, 0.0],
            white_noise_sd: 0.0,
            common_mode_sd: 0.0,
            ..EegSynthConfig::default()
        };
        let w = synth_window("w", &[5.0; 3], &cfg, &mut stream_rng(1, 1, 0)).unwrap();
        for ch in w.samples() {
            let rms = (ch.iter().map(|v| v * v).sum::<f64>() / ch.len() as f64).sqrt();
            assert!((rms - 3.0).abs() < 1e-9, "{rms}");
        }
    }

    #[test]
    fn exponent_is_clamped() {
        let cfg = EegSynthConfig {
            exponent_range: [0.0, 2.0],
            ..EegSynthConfig::default()
        };
        for pad in [[1.0; 3], [9.0; 3], [1.0, 9.0, 1.0]] {
            for b in 0..4 {
                let g = cfg.exponent(5, b, &pad);
                assert!((0.0..=2.0).contains(&g));
            }
        }
        assert_eq!(EegSynthConfig::default().exponent(0, 0, &[5.0; 3]), 0.0);
    }

    #[test]
    fn rejects_bad_bands() {
        let mut cfg = EegSynthConfig::default();
        cfg.band_edges[3] = [32.0, 70.0];
        assert!(cfg.validate().is_err());
    }
}
