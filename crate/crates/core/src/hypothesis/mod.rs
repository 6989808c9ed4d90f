//! Tests for the presence and number of breaks.

pub mod critical;
pub mod simulate;
mod stats;

use serde::Serialize;

pub use critical::{CriticalKind, CriticalValueTable, CriticalValues, Level};
pub use stats::{double_max, f_next, sequential_count, sup_f, SequentialCount};

use crate::partition::BreakPartition;
use crate::scalar::Scalar;

/// Which null and alternative a statistic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum Hypothesis {
    /// No breaks against breaks at user-supplied dates.
    KnownBreaks { breaks: usize },
    /// No breaks against `breaks` unknown breaks.
    SupF { breaks: usize },
    /// No breaks against between `lo` and `hi` unknown breaks.
    DoubleMax { lo: usize, hi: usize, weighted: bool },
    /// `breaks` against `breaks + 1`.
    FNext { breaks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rejections {
    pub at90: bool,
    pub at95: bool,
    pub at99: bool,
}

impl Rejections {
    pub fn at(&self, level: Level) -> bool {
        match level {
            Level::L90 => self.at90,
            Level::L95 => self.at95,
            Level::L99 => self.at99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestDetails<T> {
    DoubleMax {
        /// `supF(s)` for `s = lo..=hi`.
        sup_f: Vec<T>,
        /// Weights `c_{a,1} / c_{a,s}` (all ones when unweighted).
        weights: Vec<f64>,
        /// Break count attaining the maximum.
        argmax: usize,
        weight_level: Level,
    },
    FNext {
        /// Regime (1-based, in the conditioning partition) holding the
        /// maximizing extra break.
        regime: usize,
        tau: usize,
        /// Supremum within each regime, `None` when the regime is too short.
        per_regime: Vec<Option<T>>,
    },
}

/// Result of one test. The reject flags compare the statistic with the
/// critical values (strict inequality).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome<T> {
    pub hypothesis: Hypothesis,
    pub statistic: T,
    /// Breaking regressors per regime used to index critical values.
    pub q: usize,
    pub critical: Option<CriticalValues>,
    pub reject: Option<Rejections>,
    /// Exact p-value, available for the known-breaks F test.
    pub p_value: Option<f64>,
    /// `(numerator, denominator)` degrees of freedom of that p-value.
    pub df: Option<(usize, usize)>,
    /// p-value with the numerator degrees of freedom set to the number of
    /// breaks instead of the number of restrictions.
    pub p_value_breaks_df: Option<f64>,
    /// Partition at which the statistic was evaluated.
    pub attained_partition: BreakPartition,
    pub details: Option<TestDetails<T>>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> TestOutcome<T> {
    pub(crate) fn new(hypothesis: Hypothesis, statistic: T, q: usize, at: BreakPartition) -> Self {
        Self {
            hypothesis,
            statistic,
            q,
            critical: None,
            reject: None,
            p_value: None,
            df: None,
            p_value_breaks_df: None,
            attained_partition: at,
            details: None,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn with_critical(mut self, c: Option<CriticalValues>) -> Self {
        self.critical = c;
        let s = self.statistic.as_f64();
        self.reject = c.map(|c| Rejections {
            at90: s > c.c90,
            at95: s > c.c95,
            at99: s > c.c99,
        });
        self
    }

    pub fn rejects(&self, level: Level) -> Option<bool> {
        self.reject.map(|r| r.at(level))
    }
}
