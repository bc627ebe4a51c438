//! Nowcasting a monthly target from a ragged-edge panel of indicators.
//!
//! The pipeline screens auxiliary search-interest series with a rolling
//! LASSO, picks a per-series transformation, extracts common factors with
//! principal components followed by a Kalman smoother, and trains a grid of
//! regressions with ARMA errors whose statistically equivalent members are
//! combined by their median.

pub mod armareg;
pub mod cli;
pub mod config;
pub mod diag;
pub mod factor;
pub mod fixture;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod select;
pub mod sim;
pub mod stats;
pub mod trainer;
pub mod transform;
