use thiserror::Error;

use crate::partition::BreakPartition;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported trimming {0}; supported values are 0.05, 0.10, 0.15, 0.20 and 0.25")]
    UnsupportedTrimming(f64),

    #[error("column `{0}` not found in dataset")]
    MissingColumn(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("insufficient observations: {0}")]
    InsufficientObservations(String),

    #[error("partial-change iteration did not converge after {iterations} iterations (best partition {best:?}, ssr {ssr})")]
    NonConvergence {
        iterations: usize,
        best: BreakPartition,
        ssr: f64,
    },

    #[error("exhaustive search would enumerate {0} partitions (limit 10^7); use the dynamic program")]
    GridTooLarge(u128),

    #[error("critical value table: {0}")]
    CriticalValues(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
