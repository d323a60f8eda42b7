use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::rng::{stream_rng, streams};
use rand::seq::SliceRandom;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanResult {
    pub r: f64,
    /// One-tailed, in the direction of the observed sign.
    pub p_one_tailed: f64,
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::invalid("need at least 3 pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value"));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|a| *a == v[0]) {
            return Err(Error::degenerate(format!("{name} is constant")));
        }
    }
    Ok(())
}

pub fn spearman_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    spearman_with(x, y, DEFAULT_PERMUTATIONS, 0, ExecMode::default())
}

/// Rank correlation with a permutation p-value: `(hits + 1) / (B + 1)`,
/// where hits count shuffles at least as extreme in the observed direction.
pub fn spearman_with(x: &[f64], y: &[f64], permutations: usize, seed: u64, mode: ExecMode) -> Result<SpearmanResult> {
    check(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let r = pearson(&rx, &ry);
    let hits = exec::map_range(mode, permutations, |b| {
        let mut perm = ry.clone();
        perm.shuffle(&mut stream_rng(seed, streams::PERMUTATION, b as u64));
        let rp = pearson(&rx, &perm);
        usize::from(if r >= 0.0 { rp >= r } else { rp <= r })
    });
    let hits: usize = hits.into_iter().sum();
    Ok(SpearmanResult {
        r,
        p_one_tailed: (hits + 1) as f64 / (permutations + 1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn monotone_extremes() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let up: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let down: Vec<f64> = x.iter().map(|v| -v * v).collect();
        let a = spearman_with(&x, &up, 999, 1, ExecMode::Sequential).unwrap();
        assert_eq!(a.r, 1.0);
        assert!(a.p_one_tailed < 0.01);
        assert_eq!(spearman_r(&x, &down).unwrap(), -1.0);
    }

    #[test]
    fn constant_rejected() {
        assert!(matches!(spearman_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(spearman_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
        let a = spearman_with(&x, &y, 500, 4, ExecMode::Sequential).unwrap();
        let b = spearman_with(&x, &y, 500, 4, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
