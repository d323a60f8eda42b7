use crate::error::{Error, Result};

pub const DEFAULT_K_MAX: usize = 8;

/// Higuchi's normalized curve length `L(k)`, averaged over the `k` offsets.
pub fn curve_length(series: &[f64], k: usize) -> f64 {
    let n = series.len();
    let mut total = 0.0;
    for m in 0..k {
        let steps = (n - 1 - m) / k;
        if steps == 0 {
            continue;
        }
        let mut len = 0.0;
        for i in 1..=steps {
            len += (series[m + i * k] - series[m + (i - 1) * k]).abs();
        }
        let norm = (n - 1) as f64 / (steps * k) as f64;
        total += len * norm / k as f64;
    }
    total / k as f64
}

/// Unclamped Higuchi estimate: least-squares slope of `ln L(k)` against
/// `ln(1/k)` for `k = 1..=k_max`.
pub fn higuchi_slope(series: &[f64], k_max: usize) -> Result<f64> {
    if k_max < 2 {
        return Err(Error::invalid(format!("k_max must be >= 2, got {k_max}")));
    }
    if series.len() < 2 * k_max {
        return Err(Error::invalid(format!(
            "series of length {} too short for k_max = {k_max}",
            series.len()
        )));
    }
    let mut xs = Vec::with_capacity(k_max);
    let mut ys = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let l = curve_length(series, k);
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::degenerate(format!(
                "curve length at k = {k} is {l}; series is constant"
            )));
        }
        xs.push(-(k as f64).ln());
        ys.push(l.ln());
    }
    let n = k_max as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

/// Higuchi fractal dimension, clamped to `[1, 2]`.
pub fn higuchi_fd(series: &[f64], k_max: usize) -> Result<f64> {
    Ok(higuchi_slope(series, k_max)?.clamp(1.0, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_one() {
        let line: Vec<f64> = (0..1280).map(|t| t as f64).collect();
        let fd = higuchi_fd(&line, 8).unwrap();
        assert!((1.0..=1.05).contains(&fd), "{fd}");
        let raw = higuchi_slope(&line, 8).unwrap();
        assert!((raw - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(
            higuchi_fd(&[2.0; 100], 8),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn preconditions() {
        assert!(higuchi_fd(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(higuchi_fd(&[1.0, 2.0, 3.0, 1.0], 3).is_err());
    }

    #[test]
    fn white_noise_is_rough() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1280).map(|_| rng.random::<f64>() - 0.5).collect();
        let fd = higuchi_fd(&x, 8).unwrap();
        assert!(fd > 1.9, "{fd}");
    }
}
