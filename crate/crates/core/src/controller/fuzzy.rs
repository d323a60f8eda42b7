use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_LABELS: [&str; 5] = ["NB", "NS", "ZE", "PS", "PB"];

/// Output labels ordered by action size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutputLabel {
    Z,
    N,
    S,
    M,
    L,
    LL,
}

impl OutputLabel {
    pub const ALL: [OutputLabel; 6] = [
        OutputLabel::Z,
        OutputLabel::N,
        OutputLabel::S,
        OutputLabel::M,
        OutputLabel::L,
        OutputLabel::LL,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutputLabel::Z => "Z",
            OutputLabel::N => "N",
            OutputLabel::S => "S",
            OutputLabel::M => "M",
            OutputLabel::L => "L",
            OutputLabel::LL => "LL",
        }
    }
}

impl fmt::Display for OutputLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutputLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown output label `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub left: f64,
    pub peak: f64,
    pub right: f64,
}

impl Triangle {
    pub fn eval(&self, x: f64) -> f64 {
        if x == self.peak {
            1.0
        } else if x < self.peak {
            if x <= self.left {
                0.0
            } else {
                (x - self.left) / (self.peak - self.left)
            }
        } else if x >= self.right {
            0.0
        } else {
            (self.right - x) / (self.right - self.peak)
        }
    }
}

/// Five triangular sets NB..PB over a closed universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyPartition {
    pub universe: [f64; 2],
    pub sets: [Triangle; 5],
}

impl FuzzyPartition {
    /// Peaks at `{-1, -0.5, 0, 0.5, 1} * scale`, each triangle reaching zero
    /// at its neighbours' peaks. The outer shoulders extend past the universe.
    pub fn symmetric(scale: f64) -> Self {
        let h = 0.5 * scale;
        let sets = std::array::from_fn(|i| {
            let peak = (i as f64 - 2.0) * h;
            Triangle {
                left: peak - h,
                peak,
                right: peak + h,
            }
        });
        Self {
            universe: [-scale, scale],
            sets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.universe;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bad universe [{lo}, {hi}]")));
        }
        for (i, t) in self.sets.iter().enumerate() {
            if !(t.left < t.peak && t.peak < t.right) || ![t.left, t.peak, t.right].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("set {} is not a proper triangle", INPUT_LABELS[i])));
            }
        }
        if self.sets.windows(2).any(|w| w[0].peak >= w[1].peak) {
            return Err(Error::invalid("partition peaks must be strictly increasing"));
        }
        // Triangles are piecewise linear, so checking the cover at every
        // breakpoint inside the universe and the universe edges suffices.
        let mut points = vec![lo, hi];
        for t in &self.sets {
            points.extend([t.left, t.peak, t.right].into_iter().filter(|p| (lo..=hi).contains(p)));
        }
        for p in points {
            let s: f64 = self.fuzzify(p).iter().sum();
            if !(s > 0.0 && s <= 1.0001) {
                return Err(Error::invalid(format!("memberships sum to {s} at x = {p}; cover must lie in (0, 1.0001]")));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.universe[0], self.universe[1])
    }

    pub fn fuzzify(&self, x: f64) -> [f64; 5] {
        let x = self.clamp(x);
        std::array::from_fn(|i| self.sets[i].eval(x))
    }
}

/// 5×5 rule grid; rows are error sets NB..PB, columns are delta sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleTable {
    pub cells: [[OutputLabel; 5]; 5],
}

impl RuleTable {
    pub fn standard() -> Self {
        use OutputLabel::*;
        Self {
            cells: [
                [LL, L, L, L, L],
                [L, M, S, S, S],
                [S, N, Z, Z, Z],
                [S, N, Z, Z, Z],
                [S, N, Z, Z, Z],
            ],
        }
    }

    pub fn get(&self, error_set: usize, delta_set: usize) -> OutputLabel {
        self.cells[error_set][delta_set]
    }

    /// Rejects tables where a more negative input gives a smaller action, or
    /// where a non-negative pair of inputs fires anything but `Z`.
    pub fn validate(&self) -> Result<()> {
        for i in 0..5 {
            for j in 0..5 {
                let here = self.cells[i][j];
                if i + 1 < 5 && self.cells[i + 1][j] > here {
                    return Err(Error::invalid(format!(
                        "rule table not monotone: ({}, {}) = {here} < ({}, {}) = {}",
                        INPUT_LABELS[i],
                        INPUT_LABELS[j],
                        INPUT_LABELS[i + 1],
                        INPUT_LABELS[j],
                        self.cells[i + 1][j]
                    )));
                }
                if j + 1 < 5 && self.cells[i][j + 1] > here {
                    return Err(Error::invalid(format!(
                        "rule table not monotone: ({}, {}) = {here} < ({}, {}) = {}",
                        INPUT_LABELS[i],
                        INPUT_LABELS[j],
                        INPUT_LABELS[i],
                        INPUT_LABELS[j + 1],
                        self.cells[i][j + 1]
                    )));
                }
                if i >= 2 && j >= 2 && here != OutputLabel::Z {
                    return Err(Error::invalid(format!(
                        "rule ({}, {}) has non-negative inputs and must be Z, found {here}",
                        INPUT_LABELS[i], INPUT_LABELS[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Max–min composition. Labels that no rule produces stay at zero.
pub fn fuzzy_infer(mu: &[f64; 5], pi: &[f64; 5], table: &RuleTable) -> [f64; 6] {
    let mut tau = [0.0_f64; 6];
    for (i, &m) in mu.iter().enumerate() {
        for (j, &p) in pi.iter().enumerate() {
            let l = table.get(i, j).index();
            tau[l] = tau[l].max(m.min(p));
        }
    }
    tau
}

/// Centroid of the active output centres. The `Z` weight is ignored, and an
/// empty activation gives the zero action.
pub fn defuzzify(tau: &[f64; 6], centers: &[[f64; 3]; 6]) -> [f64; 3] {
    let mut num = [0.0_f64; 3];
    let mut den = 0.0;
    for l in 1..6 {
        let t = tau[l];
        if t == 0.0 {
            continue;
        }
        den += t;
        for d in 0..3 {
            num[d] += t * centers[l][d];
        }
    }
    if den == 0.0 {
        return [0.0; 3];
    }
    num.map(|v| v / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_partition_is_valid() {
        FuzzyPartition::symmetric(1.0).validate().unwrap();
        FuzzyPartition::symmetric(0.5).validate().unwrap();
    }

    #[test]
    fn fuzzify_peaks_midpoints_and_clamp() {
        let p = FuzzyPartition::symmetric(1.0);
        assert_eq!(p.fuzzify(0.0), [0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(p.fuzzify(-0.75), [0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(p.fuzzify(-7.0), p.fuzzify(-1.0));
        assert_eq!(p.fuzzify(3.0), [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn gap_in_cover_is_rejected() {
        let mut p = FuzzyPartition::symmetric(1.0);
        p.sets[2].left = -0.1;
        p.sets[1].right = -0.3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn standard_table_validates() {
        RuleTable::standard().validate().unwrap();
    }

    #[test]
    fn non_monotone_table_rejected() {
        let mut t = RuleTable::standard();
        t.cells[1][0] = OutputLabel::S;
        assert!(t.validate().is_err());
        let mut t = RuleTable::standard();
        t.cells[3][4] = OutputLabel::N;
        assert!(t.validate().is_err());
    }

    #[test]
    fn hand_evaluated_composition() {
        let mut t = RuleTable::standard();
        t.cells[1][2] = OutputLabel::S;
        t.cells[2][2] = OutputLabel::N;
        let tau = fuzzy_infer(&[0.0, 0.4, 0.6, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0, 0.0], &t);
        assert_eq!(tau, [0.0, 0.6, 0.4, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_activation() {
        let tau = fuzzy_infer(&[0.0; 5], &[0.3, 0.0, 0.0, 0.2, 1.0], &RuleTable::standard());
        assert_eq!(tau, [0.0; 6]);
        assert_eq!(defuzzify(&tau, &[[1.0; 3]; 6]), [0.0; 3]);
    }

    #[test]
    fn defuzzify_ignores_z() {
        let c = [[9.0; 3], [1.0; 3], [2.0; 3], [3.0; 3], [4.0; 3], [5.0; 3]];
        assert_eq!(defuzzify(&[1.0, 0.0, 0.5, 0.0, 0.5, 0.0], &c), [3.0; 3]);
        assert_eq!(defuzzify(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &c), [0.0; 3]);
    }

    #[test]
    fn label_round_trip() {
        for l in OutputLabel::ALL {
            assert_eq!(l.as_str().parse::<OutputLabel>().unwrap(), l);
        }
        assert!("XL".parse::<OutputLabel>().is_err());
    }
}
