//! Estimation and testing of multiple structural breaks in linear
//! regressions for time series and panels, including panels augmented with
//! cross-sectional averages or observed factors.
//!
//! Numerical routines are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod data;
pub mod design;
pub mod dpsearch;
pub mod error;
pub mod hypothesis;
pub mod interval;
pub mod linalg;
pub mod partition;
pub mod regress;
pub mod scalar;
pub mod spec;

pub use data::cross_sectional_averages;
pub use design::{build_design, build_explicit_design, ColumnInfo, ColumnRole};
pub use dpsearch::{
    estimate_breaks, grid_search_oracle, optimal_partition, segment_costs, Coefficient,
    EstimationMethod, RegimeEstimate, Segmentation,
};
pub use error::{Error, Result};
pub use hypothesis::critical::{CriticalKind, CriticalValueTable, CriticalValues, Level};
pub use hypothesis::simulate::simulate_critical_values;
pub use hypothesis::{
    double_max, f_next, sequential_count, sup_f, Hypothesis, Rejections, SequentialCount,
    TestDetails, TestOutcome,
};
pub use interval::{argmax_cdf, argmax_quantile, break_ci, break_ci_with, BreakInterval, CiMoments};
pub use partition::{max_breaks, regime_indicator, BreakPartition, Trimming};
pub use regress::{chow_f, covariance, hac_covariance, ols, ols_with_vce, ssr_given_breaks};
pub use scalar::Scalar;
pub use spec::{Deterministic, ModelSpec, Vce};

pub type PanelDataset = data::PanelDataset<f64>;
pub type RegressionSystem = design::RegressionSystem<f64>;
pub type FitResult = regress::FitResult<f64>;
pub type SegmentCostTable = dpsearch::SegmentCostTable<f64>;
pub type BreakEstimates = dpsearch::BreakEstimates<f64>;
pub type Matrix = linalg::Matrix<f64>;
