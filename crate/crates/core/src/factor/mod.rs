//! Common factors of a standardised panel: factor-count estimation,
//! principal components with asymptotic bands, a VAR on the factors and a
//! Kalman-smoother update that fills the ragged edge.

mod ci;
mod kalman;
mod loadings;
mod numfactors;
mod pc;
mod var;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ci::{bai_confidence_intervals, ConfidenceBands};
pub use kalman::{kalman_smooth, MissingCells, Smoothed, StateSpace, DIFFUSE_VARIANCE, PSI_FLOOR};
pub use loadings::smoothed_loadings_mc;
pub use numfactors::{edge_distribution, estimate_num_factors, EigenReport};
pub use pc::{balanced_rows, orient_columns, pc_extract, PcResult};
pub use var::{companion, fit_var, VarFit};

use crate::panel::TimeSeriesPanel;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("at least one factor is required")]
    ZeroFactors,
    #[error("only {rows} usable rows; at least {needed} are required")]
    TooFewRows { rows: usize, needed: usize },
    #[error("requested {r} factors but the balanced panel has rank {rank}")]
    RankTooLow { r: usize, rank: usize },
    #[error("r_max = {r_max} needs at least r_max + 5 series, found {n}")]
    RMaxTooLarge { r_max: usize, n: usize },
    #[error("{what} has {cells} usable cells; at least {needed} are required")]
    TooFewCells { what: String, cells: usize, needed: usize },
    #[error("non-finite value in the balanced panel")]
    NonFinite,
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    Level(f64),
    #[error("factor VAR is not stationary (spectral radius {0:.4})")]
    Explosive(f64),
    #[error("singular {0}")]
    Singular(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorOptions {
    /// Number of factors; `None` estimates it from the spectrum.
    pub r: Option<usize>,
    pub r_max: usize,
    pub var_lags: usize,
    pub ci_level: f64,
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            r: Some(1),
            r_max: 8,
            var_lags: 1,
            ci_level: 0.95,
            n_draws: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorModel {
    pub r: usize,
    /// `P̂`, `N×r`.
    pub loadings: DMatrix<f64>,
    /// `F̂`, `T×r`, NaN where a row has too few observed cells.
    pub static_factors: DMatrix<f64>,
    /// `F̃`, `T×r`.
    pub smoothed_factors: DMatrix<f64>,
    /// Smoother state variances of `F̃`, `T×r`.
    pub smoothed_variances: DMatrix<f64>,
    pub var: VarFit,
    /// Diagonal of `Ψ̂`.
    pub idio_variances: Vec<f64>,
    pub bands: ConfidenceBands,
    /// `P̃`, `N×r`.
    pub smoothed_loadings: DMatrix<f64>,
    pub mc_objective: f64,
    pub balanced_rows: Vec<usize>,
    pub eigen: Option<EigenReport>,
}

impl FactorModel {
    pub fn factor_cov(&self) -> &DMatrix<f64> {
        &self.var.factor_cov
    }

    /// First smoothed factor as a plain vector.
    pub fn smoothed_series(&self) -> Vec<f64> {
        self.smoothed_factors.column(0).iter().copied().collect()
    }
}

/// Two-step estimator on raw values with NaN sentinels and a mask.
pub fn two_step_matrix(
    values: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    opts: &FactorOptions,
) -> Result<FactorModel, FactorError> {
    let rows = balanced_rows(mask);
    let eigen = match opts.r {
        Some(_) => None,
        None => {
            let xb = values.select_rows(&rows);
            Some(estimate_num_factors(&xb, opts.r_max)?)
        }
    };
    let r = match (opts.r, &eigen) {
        (Some(r), _) => r,
        (None, Some(e)) => e.r_hat.max(1),
        (None, None) => unreachable!(),
    };
    let pc = pc_extract(values, mask, r)?;

    let n = values.ncols();
    let nb = pc.balanced_rows.len() as f64;
    let idio_variances: Vec<f64> = (0..n)
        .map(|i| {
            let ss: f64 = pc.balanced_rows.iter().map(|&s| pc.residuals[(s, i)].powi(2)).sum();
            (ss / nb).max(PSI_FLOOR)
        })
        .collect();

    // The VAR only sees factors computed from complete rows.
    let mut var_input = DMatrix::from_element(values.nrows(), r, f64::NAN);
    for &s in &pc.balanced_rows {
        var_input.set_row(s, &pc.factors.row(s));
    }
    let var = fit_var(&var_input, opts.var_lags)?;
    let (smoothed_factors, smoothed_variances) = kalman_smooth(
        values,
        mask,
        &pc.loadings,
        &idio_variances,
        &var.companion,
        &var.state_noise(),
        &var.state_cov,
    )?;
    let bands = bai_confidence_intervals(&pc, opts.ci_level)?;
    let (smoothed_loadings, mc_objective) = smoothed_loadings_mc(
        &smoothed_factors,
        values,
        &pc.balanced_rows,
        &bands.loading_lower,
        &bands.loading_upper,
        opts.n_draws,
        opts.seed,
    );
    Ok(FactorModel {
        r,
        loadings: pc.loadings,
        static_factors: pc.factors,
        smoothed_factors,
        smoothed_variances,
        var,
        idio_variances,
        bands,
        smoothed_loadings,
        mc_objective,
        balanced_rows: pc.balanced_rows,
        eigen,
    })
}

/// Two-step estimator on a standardised panel.
pub fn two_step(panel: &TimeSeriesPanel, opts: &FactorOptions) -> Result<FactorModel, FactorError> {
    two_step_matrix(panel.values(), panel.mask(), opts)
}
