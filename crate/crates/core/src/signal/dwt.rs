//! Four-level db4 discrete wavelet transform with symmetric (half-point)
//! boundary extension.
//!
//! At 128 Hz the detail levels land on the classic EEG rhythms:
//! D1 = gamma (32–64 Hz), D2 = beta (16–32 Hz), D3 = alpha (8–16 Hz),
//! D4 = theta (4–8 Hz). A4 holds everything below 4 Hz.
//!
//! Analysis computes every coefficient whose support touches the signal
//! (`floor((n + L - 1) / 2)` per level), so synthesis over the original span
//! is exact regardless of the extension rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS: usize = 4;
pub const MIN_LEN: usize = 16;

/// db4 (8 taps, four vanishing moments) decomposition low-pass filter.
pub const DB4_DEC_LO: [f64; 8] = [
    -0.010_597_401_784_997_278,
    0.032_883_011_666_982_945,
    0.030_841_381_835_986_965,
    -0.187_034_811_718_881_14,
    -0.027_983_769_416_983_85,
    0.630_880_767_929_590_4,
    0.714_846_570_552_541_5,
    0.230_377_813_308_855_23,
];

/// Quadrature-mirror high-pass: `g[k] = (-1)^(k+1) h[L-1-k]`.
pub fn db4_dec_hi() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (k, gk) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        *gk = sign * DB4_DEC_LO[7 - k];
    }
    g
}

/// Symmetric extension: `x[-1] = x[0]`, `x[n] = x[n-1]`, reflected with period `2n`.
fn sym_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn coeff_len(n: usize, taps: usize) -> usize {
    (n + taps - 1) / 2
}

/// One analysis level: `c[i] = sum_j f[j] * x[2i + 1 - j]`.
pub fn dwt_step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let taps = lo.len();
    let m = coeff_len(n, taps);
    let mut a = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for j in 0..taps {
            let v = x[sym_index(2 * i as isize + 1 - j as isize, n)];
            sa += lo[j] * v;
            sd += hi[j] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// One synthesis level, returning `out_len` samples:
/// `x[t] = sum_i lo[2i + 1 - t] a[i] + hi[2i + 1 - t] d[i]`.
pub fn idwt_step(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64], out_len: usize) -> Vec<f64> {
    let taps = lo.len() as isize;
    let m = a.len() as isize;
    (0..out_len as isize)
        .map(|t| {
            let first = ((t - 1) as f64 / 2.0).ceil().max(0.0) as isize;
            let last = ((t + taps - 2) / 2).min(m - 1);
            let mut s = 0.0;
            for i in first..=last {
                let j = (2 * i + 1 - t) as usize;
                s += lo[j] * a[i as usize] + hi[j] * d[i as usize];
            }
            s
        })
        .collect()
}

/// Coefficients of a four-level decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// D1..D4, finest first.
    pub details: [Vec<f64>; LEVELS],
    /// A4.
    pub approx: Vec<f64>,
    /// Signal length entering each level (level 1 first).
    pub input_lens: [usize; LEVELS],
}

impl Decomposition {
    pub fn original_len(&self) -> usize {
        self.input_lens[0]
    }

    fn zeros_like(&self) -> Self {
        Self {
            details: self.details.clone().map(|d| vec![0.0; d.len()]),
            approx: vec![0.0; self.approx.len()],
            input_lens: self.input_lens,
        }
    }

    /// Full inverse transform.
    pub fn reconstruct(&self) -> Vec<f64> {
        let lo = DB4_DEC_LO;
        let hi = db4_dec_hi();
        let mut a = self.approx.clone();
        for level in (0..LEVELS).rev() {
            a = idwt_step(&a, &self.details[level], &lo, &hi, self.input_lens[level]);
        }
        a
    }
}

pub fn dwt_decompose(series: &[f64]) -> Result<Decomposition> {
    if series.len() < MIN_LEN {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than {MIN_LEN}",
            series.len()
        )));
    }
    let lo = DB4_DEC_LO;
    let hi = db4_dec_hi();
    let mut details: [Vec<f64>; LEVELS] = Default::default();
    let mut input_lens = [0usize; LEVELS];
    let mut current = series.to_vec();
    for level in 0..LEVELS {
        input_lens[level] = current.len();
        let (a, d) = dwt_step(&current, &lo, &hi);
        details[level] = d;
        current = a;
    }
    Ok(Decomposition {
        details,
        approx: current,
        input_lens,
    })
}

/// Time-domain signal carried by detail level `level` (1 = D1 ... 4 = D4),
/// all other coefficients zeroed.
pub fn band_reconstruct(coeffs: &Decomposition, level: usize) -> Result<Vec<f64>> {
    if !(1..=LEVELS).contains(&level) {
        return Err(Error::invalid(format!("detail level {level} outside 1..={LEVELS}")));
    }
    let mut only = coeffs.zeros_like();
    only.details[level - 1] = coeffs.details[level - 1].clone();
    Ok(only.reconstruct())
}

/// Time-domain signal carried by A4 alone.
pub fn approx_reconstruct(coeffs: &Decomposition) -> Vec<f64> {
    let mut only = coeffs.zeros_like();
    only.approx = coeffs.approx.clone();
    only.reconstruct()
}
