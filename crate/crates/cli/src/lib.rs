//! Command-line front end: CSV ingestion, option handling, reports.

pub mod config;
pub mod data;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use report::Report;
pub use run::{execute, main_with_args};
