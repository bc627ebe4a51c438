//! Screening of auxiliary regressors with a cross-validated lasso applied
//! over a sequence of expanding windows.

mod cv;
mod lasso;
mod rolling;

use thiserror::Error;

pub use cv::{contiguous_folds, lambda_grid, lasso_path_cv, CvOptions, CvRule, LassoCv};
pub use lasso::{lasso_fit, lasso_fit_with, soft_threshold, LassoFit, LassoOptions};
pub use rolling::{rolling_select, SelectionResult};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no candidate regressors")]
    NoCandidates,
    #[error("non-finite value in the regression inputs")]
    NonFinite,
    #[error("lambda must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot form {folds} cross-validation folds from {observations} observations")]
    Folds { folds: usize, observations: usize },
    #[error("window count {h_g} is too large for a sample of {sample} observations")]
    WindowTooLarge { h_g: usize, sample: usize },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    Alpha(f64),
}

#[cfg(test)]
mod tests;
