//! Trimming fractions and break partitions.
//!
//! Break dates use 1-based time positions. A break at `T_j` marks the last
//! observation of regime `j`, so regime `j` covers `(T_{j-1}, T_j]` with
//! `T_0 = 0` and `T_{s+1} = T`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trimming fraction, restricted to the tabulated values 5%, 10%, 15%, 20%
/// and 25%. Stored in whole percent so that `ceil(eps * T)` is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Trimming(u8);

impl Trimming {
    pub const SUPPORTED: [Trimming; 5] = [
        Trimming(5),
        Trimming(10),
        Trimming(15),
        Trimming(20),
        Trimming(25),
    ];

    pub fn new(eps: f64) -> Result<Self> {
        Self::SUPPORTED
            .iter()
            .copied()
            .find(|t| (t.fraction() - eps).abs() < 1e-9)
            .ok_or(Error::UnsupportedTrimming(eps))
    }

    pub fn from_percent(pct: u8) -> Result<Self> {
        Self::new(f64::from(pct) / 100.0)
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    /// Minimum regime length `ceil(eps * len)`.
    pub fn min_length(self, len: usize) -> usize {
        (usize::from(self.0) * len).div_ceil(100)
    }

    /// Largest admissible number of breaks, `ceil(1/eps) - 2`.
    pub fn max_breaks(self) -> usize {
        100usize.div_ceil(usize::from(self.0)) - 2
    }
}

impl Default for Trimming {
    fn default() -> Self {
        Trimming(15)
    }
}

impl TryFrom<f64> for Trimming {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Trimming::new(v)
    }
}

impl From<Trimming> for f64 {
    fn from(t: Trimming) -> f64 {
        t.fraction()
    }
}

impl fmt::Display for Trimming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.fraction())
    }
}

/// `ceil(1/eps) - 2` for one of the supported trimming fractions.
pub fn max_breaks(eps: f64) -> Result<usize> {
    Trimming::new(eps).map(Trimming::max_breaks)
}

/// Ordered break dates `T_1 < ... < T_s` inside `1..T-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BreakPartition {
    breaks: Vec<usize>,
}

impl BreakPartition {
    pub fn empty() -> Self {
        Self { breaks: Vec::new() }
    }

    /// Validates ordering and range against a sample of `n_periods`.
    pub fn new(breaks: Vec<usize>, n_periods: usize) -> Result<Self> {
        for w in breaks.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InfeasiblePartition(format!(
                    "break dates must be strictly increasing, got {breaks:?}"
                )));
            }
        }
        if let Some(&first) = breaks.first() {
            if first < 1 {
                return Err(Error::InfeasiblePartition(
                    "break dates are 1-based positions".into(),
                ));
            }
        }
        if let Some(&last) = breaks.last() {
            if last >= n_periods {
                return Err(Error::InfeasiblePartition(format!(
                    "break at {last} leaves an empty final regime (T = {n_periods})"
                )));
            }
        }
        Ok(Self { breaks })
    }

    /// Validates against the trimming bounds as well.
    pub fn feasible(breaks: Vec<usize>, n_periods: usize, trimming: Trimming) -> Result<Self> {
        let p = Self::new(breaks, n_periods)?;
        p.check_feasible(n_periods, trimming.min_length(n_periods))?;
        Ok(p)
    }

    /// Checks every regime has at least `min_len` observations.
    pub fn check_feasible(&self, n_periods: usize, min_len: usize) -> Result<()> {
        for (j, (lo, hi)) in self.regimes(n_periods).into_iter().enumerate() {
            let len = hi + 1 - lo;
            if len < min_len {
                return Err(Error::InfeasiblePartition(format!(
                    "regime {} spans {} observations, minimum is {}",
                    j + 1,
                    len,
                    min_len
                )));
            }
        }
        Ok(())
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn len(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn n_regimes(&self) -> usize {
        self.breaks.len() + 1
    }

    /// Inclusive 1-based `(first, last)` positions of each regime.
    pub fn regimes(&self, n_periods: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_regimes());
        let mut start = 1;
        for &b in &self.breaks {
            out.push((start, b));
            start = b + 1;
        }
        out.push((start, n_periods));
        out
    }

    /// Regime (1-based) of the 1-based time position `t`.
    pub fn regime_of(&self, t: usize) -> usize {
        1 + self.breaks.partition_point(|&b| b < t)
    }

    /// Returns a new partition with `tau` inserted.
    pub fn with_break(&self, tau: usize) -> Self {
        let mut b = self.breaks.clone();
        let pos = b.partition_point(|&x| x < tau);
        if b.get(pos) != Some(&tau) {
            b.insert(pos, tau);
        }
        Self { breaks: b }
    }

    /// Fractions `T_j / T`.
    pub fn fractions(&self, n_periods: usize) -> Vec<f64> {
        self.breaks
            .iter()
            .map(|&b| b as f64 / n_periods as f64)
            .collect()
    }
}

impl fmt::Display for BreakPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.breaks.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}")
    }
}

/// Regime id `(1,..,1,2,..,2,..,s+1)` for each time position.
pub fn regime_indicator(partition: &BreakPartition, n_periods: usize) -> Result<Vec<usize>> {
    BreakPartition::new(partition.breaks().to_vec(), n_periods)?;
    Ok((1..=n_periods).map(|t| partition.regime_of(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn max_breaks_matches_ceiling_formula() {
        assert_eq!(max_breaks(0.15).unwrap(), 5);
        assert_eq!(max_breaks(0.10).unwrap(), 8);
        assert_eq!(max_breaks(0.05).unwrap(), 18);
        assert_eq!(max_breaks(0.20).unwrap(), 3);
        assert_eq!(max_breaks(0.25).unwrap(), 2);
    }

    #[test]
    fn unsupported_trimming_names_supported_values() {
        let err = max_breaks(0.3).unwrap_err().to_string();
        assert!(err.contains("0.05") && err.contains("0.25"), "{err}");
    }

    #[test]
    fn min_length_is_exact_ceiling() {
        let t = Trimming::new(0.15).unwrap();
        assert_eq!(t.min_length(20), 3);
        assert_eq!(t.min_length(52), 8);
        assert_eq!(t.min_length(100), 15);
        assert_eq!(t.min_length(101), 16);
    }

    #[test]
    fn indicator_examples() {
        let p = BreakPartition::new(vec![2], 5).unwrap();
        assert_eq!(regime_indicator(&p, 5).unwrap(), vec![1, 1, 2, 2, 2]);
        let p = BreakPartition::new(vec![2, 4], 6).unwrap();
        assert_eq!(regime_indicator(&p, 6).unwrap(), vec![1, 1, 2, 2, 3, 3]);
        assert_eq!(
            regime_indicator(&BreakPartition::empty(), 4).unwrap(),
            vec![1, 1, 1, 1]
        );
    }

    #[test]
    fn rejects_unordered_and_out_of_range() {
        assert!(BreakPartition::new(vec![3, 3], 10).is_err());
        assert!(BreakPartition::new(vec![10], 10).is_err());
        assert!(BreakPartition::new(vec![0], 10).is_err());
    }

    #[test]
    fn trimming_feasibility() {
        let t = Trimming::new(0.15).unwrap();
        assert!(BreakPartition::feasible(vec![10], 52, t).is_ok());
        assert!(BreakPartition::feasible(vec![3], 52, t).is_err());
        assert!(BreakPartition::feasible(vec![45], 52, t).is_err());
        assert!(BreakPartition::feasible(vec![10, 17], 52, t).is_err());
    }

    proptest! {
        #[test]
        fn indicator_is_monotone_and_surjective(
            n in 4usize..60,
            raw in proptest::collection::btree_set(1usize..59, 0..5)
        ) {
            let breaks: Vec<usize> = raw.into_iter().filter(|&b| b < n).collect();
            let p = BreakPartition::new(breaks, n).unwrap();
            let ind = regime_indicator(&p, n).unwrap();
            prop_assert!(ind.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 1));
            prop_assert_eq!(ind[0], 1);
            prop_assert_eq!(*ind.last().unwrap(), p.n_regimes());
        }

        #[test]
        fn refinement_inside_trimmed_regime_stays_feasible(
            n in 40usize..200,
            pct in prop::sample::select(vec![5u8, 10, 15, 20, 25]),
            frac in 0.0f64..1.0,
            pick in 0.0f64..1.0,
        ) {
            let trim = Trimming::from_percent(pct).unwrap();
            let h = trim.min_length(n);
            prop_assume!(2 * h <= n);
            let b = h + ((n - 2 * h) as f64 * frac) as usize;
            let p = BreakPartition::feasible(vec![b], n, trim).unwrap();
            // choose a regime and a point in its trimmed interior
            let regs = p.regimes(n);
            let j = ((regs.len() as f64) * pick) as usize % regs.len();
            let (lo, hi) = regs[j];
            let len = hi + 1 - lo;
            let hj = trim.min_length(len);
            prop_assume!(hj >= 1 && lo - 1 + hj <= hi - hj);
            let tau = lo - 1 + hj;
            let refined = p.with_break(tau);
            let rr = refined.regimes(n);
            for (a, bb) in rr {
                let l = bb + 1 - a;
                prop_assert!(l as f64 >= trim.fraction() * len as f64 - 1e-9 || l >= h);
            }
        }
    }
}
