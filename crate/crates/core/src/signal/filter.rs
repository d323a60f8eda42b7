//! Zero-phase Butterworth band-pass built from second-order sections.

use std::f64::consts::PI;

use super::window::EegWindow;
use crate::error::{Error, Result};

pub const DEFAULT_LOW_HZ: f64 = 1.0;
pub const DEFAULT_HIGH_HZ: f64 = 60.0;
const BUTTERWORTH_ORDER: usize = 4;

/// Normalized (a0 = 1) biquad, transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    pub fn lowpass(cutoff: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let b1 = 1.0 - cos;
        Self::from_raw([b1 / 2.0, b1, b1 / 2.0], 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn highpass(cutoff: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let b0 = (1.0 + cos) / 2.0;
        Self::from_raw([b0, -(1.0 + cos), b0], 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filter state that is already at steady state for a constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y = self.dc_gain() * x0;
        let z2 = self.b[2] * x0 - self.a[1] * y;
        let z1 = self.b[1] * x0 - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

fn butterworth_qs(order: usize) -> Vec<f64> {
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).cos()))
        .collect()
}

/// Cascade of 4th-order Butterworth high-pass and low-pass sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn design(low: f64, high: f64, fs: f64) -> Result<Self> {
        if !(low > 0.0 && low < high && high < fs / 2.0) {
            return Err(Error::invalid(format!(
                "band edges must satisfy 0 < low < high < fs/2, got low={low}, high={high}, fs={fs}"
            )));
        }
        let qs = butterworth_qs(BUTTERWORTH_ORDER);
        let mut sections: Vec<Biquad> = qs.iter().map(|&q| Biquad::highpass(low, fs, q)).collect();
        sections.extend(qs.iter().map(|&q| Biquad::lowpass(high, fs, q)));
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    fn run_cascade(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        for s in &self.sections {
            let z = s.steady_state(x[0]);
            s.run(x, z);
        }
    }

    /// Forward–backward application with odd-reflection padding and
    /// steady-state initial conditions. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (6 * self.sections.len() + 3).max(128).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.run_cascade(&mut ext);
        ext.reverse();
        self.run_cascade(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Zero-phase band-pass of every channel.
pub fn bandpass(window: &EegWindow, low: f64, high: f64) -> Result<EegWindow> {
    let filter = BandpassFilter::design(low, high, window.sample_rate())?;
    window.map_channels(|row| Ok(filter.filtfilt(row)))
}
