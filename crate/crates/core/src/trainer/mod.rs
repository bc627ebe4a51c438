//! Rolling-origin training of the ARMA-error regression grid: one-step
//! backtests per (p, q), weighted absolute-error ranking, Diebold–Mariano
//! screening against the best model and median combination.

mod combine;
mod comparators;
mod dm;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use combine::{
    blend_weights, combine_median, final_blend, median_of, order_label, single, CombineMethod, Component, ModelForecast,
    NowcastResult,
};
pub use comparators::{naive_factor, ols_backtest, OlsBacktest};
pub use dm::{bartlett_lag, bartlett_lrv, diebold_mariano, DmLoss, DmTest};

use crate::armareg::{fit_armareg, ArmaError, ArmaOptions};
use crate::stats;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{h} origins; at least {needed} are required")]
    TooFewOrigins { h: usize, needed: usize },
    #[error("backtest length {h_t} must be below the sample length {n}")]
    HorizonTooLong { h_t: usize, n: usize },
    #[error("origin weights must be nonnegative and sum to one")]
    Weights,
    #[error("non-finite forecast errors")]
    NonFinite,
    #[error("no model in the grid completed every origin")]
    AllFailed,
    #[error("no surviving model has a forecast")]
    NoSurvivors,
    #[error("MAE must be positive, got {0}")]
    NonPositiveMae(f64),
    #[error(transparent)]
    Arma(#[from] ArmaError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOptions {
    pub h_t: usize,
    pub p_max: usize,
    pub q_max: usize,
    /// Origin weights `Υ`; equal weights when `None`.
    pub weights: Option<Vec<f64>>,
    pub level: f64,
    pub alpha_dm: f64,
    pub dm_loss: DmLoss,
    pub arma: ArmaOptions,
    /// Start each origin's optimisation from the previous origin's estimate.
    /// Random restarts then run at the first origin only.
    pub warm_start: bool,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            h_t: 36,
            p_max: 4,
            q_max: 4,
            weights: None,
            level: 0.95,
            alpha_dm: 0.10,
            dm_loss: DmLoss::Absolute,
            arma: ArmaOptions {
                compute_se: false,
                ..ArmaOptions::default()
            },
            warm_start: true,
        }
    }
}

impl BacktestOptions {
    pub fn orders(&self) -> Vec<(usize, usize)> {
        grid_orders(self.p_max, self.q_max)
    }
}

/// Grid in index order `m = q (p_max + 1) + p`.
pub fn grid_orders(p_max: usize, q_max: usize) -> Vec<(usize, usize)> {
    (0..=q_max).flat_map(|q| (0..=p_max).map(move |p| (p, q))).collect()
}

pub fn equal_weights(h_t: usize) -> Vec<f64> {
    vec![1.0 / h_t as f64; h_t]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub orders: Vec<(usize, usize)>,
    /// Realised values at the origins.
    pub actuals: Vec<f64>,
    /// `H_t × M`, NaN where the fit failed.
    pub forecasts: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
    pub abs_errors: Vec<Vec<f64>>,
    pub failed: Vec<bool>,
    pub weights: Vec<f64>,
    /// NaN for failed models.
    pub wae: Vec<f64>,
    pub best_index: usize,
    pub dm_pvalues: Vec<f64>,
    pub survivors: Vec<usize>,
    /// Share of origins whose interval contains the realised value.
    pub coverage: Vec<f64>,
    pub level: f64,
    pub alpha_dm: f64,
}

/// Backtest of the median combination, origin by origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedBacktest {
    pub points: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub errors: Vec<f64>,
    pub mae: f64,
    pub median_ae: f64,
    pub coverage: f64,
}

impl BacktestReport {
    pub fn h_t(&self) -> usize {
        self.actuals.len()
    }

    pub fn best_order(&self) -> (usize, usize) {
        self.orders[self.best_index]
    }

    pub fn index_of(&self, p: usize, q: usize) -> Option<usize> {
        self.orders.iter().position(|&o| o == (p, q))
    }

    pub fn model_errors(&self, m: usize) -> Vec<f64> {
        self.errors.iter().map(|row| row[m]).collect()
    }

    /// Equal-weight MAE of model `m`.
    pub fn mae(&self, m: usize) -> f64 {
        stats::mean(&self.abs_errors.iter().map(|row| row[m]).collect::<Vec<_>>())
    }

    pub fn combined(&self) -> CombinedBacktest {
        let h_t = self.h_t();
        let mut out = CombinedBacktest {
            points: Vec::with_capacity(h_t),
            lower: Vec::with_capacity(h_t),
            upper: Vec::with_capacity(h_t),
            errors: Vec::with_capacity(h_t),
            mae: 0.0,
            median_ae: 0.0,
            coverage: 0.0,
        };
        let mut covered = 0;
        for h in 0..h_t {
            let pick = |v: &Vec<Vec<f64>>| self.survivors.iter().map(|&m| v[h][m]).collect::<Vec<f64>>();
            let point = stats::median(&pick(&self.forecasts));
            let lo = stats::median(&pick(&self.lower));
            let hi = stats::median(&pick(&self.upper));
            let y = self.actuals[h];
            if lo <= y && y <= hi {
                covered += 1;
            }
            out.points.push(point);
            out.lower.push(lo);
            out.upper.push(hi);
            out.errors.push(y - point);
        }
        let abs: Vec<f64> = out.errors.iter().map(|e| e.abs()).collect();
        out.mae = stats::mean(&abs);
        out.median_ae = stats::median(&abs);
        out.coverage = covered as f64 / h_t as f64;
        out
    }
}

struct Cell {
    forecast: f64,
    lower: f64,
    upper: f64,
}

fn validate_weights(w: &[f64], h_t: usize) -> Result<(), TrainerError> {
    if w.len() != h_t {
        return Err(TrainerError::Shape(format!("{} weights for {h_t} origins", w.len())));
    }
    let sum: f64 = w.iter().sum();
    if w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(TrainerError::Weights);
    }
    Ok(())
}

fn run_model(y: &[f64], x: &[Vec<f64>], p: usize, q: usize, opts: &BacktestOptions) -> Vec<Option<Cell>> {
    let n = y.len();
    let mut arma = opts.arma.clone();
    let mut cells = Vec::with_capacity(opts.h_t);
    for h in 1..=opts.h_t {
        let n_train = n - opts.h_t + h - 1;
        let xs: Vec<Vec<f64>> = x.iter().map(|c| c[..n_train].to_vec()).collect();
        let attempt = |arma: &ArmaOptions| {
            fit_armareg(&y[..n_train], &xs, p, q, arma).and_then(|m| {
                let row: Vec<f64> = x.iter().map(|c| c[n_train]).collect();
                let fc = m.forecast(&[row], opts.level)?;
                Ok((m.free_params, fc[0]))
            })
        };
        let mut cell = attempt(&arma);
        if cell.is_err() && arma.warm_start.is_some() {
            // A warm start can stall on a ridge; retry from scratch.
            cell = attempt(&opts.arma);
        }
        match cell {
            Ok((free, fc)) => {
                if opts.warm_start {
                    arma.warm_start = Some(free);
                    arma.restarts = 0;
                }
                cells.push(Some(Cell {
                    forecast: fc.point,
                    lower: fc.lower,
                    upper: fc.upper,
                }));
            }
            Err(e) => {
                warn!("arma({p},{q}) failed at origin {h}: {e}");
                cells.push(None);
            }
        }
    }
    cells
}

/// One-step backtest of every (p, q) in the grid over the last `h_t`
/// observations of `y`, each origin refitted on an expanding window.
/// `x` holds the factor columns, at least as long as `y`.
pub fn backtest_grid(y: &[f64], x: &[Vec<f64>], opts: &BacktestOptions) -> Result<BacktestReport, TrainerError> {
    let n = y.len();
    if opts.h_t == 0 {
        return Err(TrainerError::TooFewOrigins { h: 0, needed: 1 });
    }
    if opts.h_t >= n {
        return Err(TrainerError::HorizonTooLong { h_t: opts.h_t, n });
    }
    if let Some(c) = x.iter().find(|c| c.len() < n) {
        return Err(TrainerError::Shape(format!("factor column of length {} for {n} targets", c.len())));
    }
    let weights = opts.weights.clone().unwrap_or_else(|| equal_weights(opts.h_t));
    validate_weights(&weights, opts.h_t)?;
    let orders = opts.orders();
    let results: Vec<Vec<Option<Cell>>> = orders.par_iter().map(|&(p, q)| run_model(y, x, p, q, opts)).collect();

    let n_models = orders.len();
    let nan_grid = || vec![vec![f64::NAN; n_models]; opts.h_t];
    let (mut forecasts, mut lower, mut upper, mut errors, mut abs_errors) =
        (nan_grid(), nan_grid(), nan_grid(), nan_grid(), nan_grid());
    let actuals: Vec<f64> = (0..opts.h_t).map(|h| y[n - opts.h_t + h]).collect();
    let mut failed = vec![false; n_models];
    let mut coverage = vec![f64::NAN; n_models];
    for (m, cells) in results.iter().enumerate() {
        let mut covered = 0;
        for (h, cell) in cells.iter().enumerate() {
            match cell {
                Some(c) => {
                    let e = actuals[h] - c.forecast;
                    forecasts[h][m] = c.forecast;
                    lower[h][m] = c.lower;
                    upper[h][m] = c.upper;
                    errors[h][m] = e;
                    abs_errors[h][m] = e.abs();
                    if c.lower <= actuals[h] && actuals[h] <= c.upper {
                        covered += 1;
                    }
                }
                None => failed[m] = true,
            }
        }
        if failed[m] {
            let (p, q) = orders[m];
            warn!("arma({p},{q}) excluded from ranking");
        } else {
            coverage[m] = covered as f64 / opts.h_t as f64;
        }
    }
    let wae: Vec<f64> = (0..n_models)
        .map(|m| {
            if failed[m] {
                f64::NAN
            } else {
                weights.iter().zip(&abs_errors).map(|(w, row)| w * row[m]).sum()
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for m in (0..n_models).filter(|&m| !failed[m]) {
        if best.is_none_or(|b| wae[m] < wae[b]) {
            best = Some(m);
        }
    }
    let best_index = best.ok_or(TrainerError::AllFailed)?;
    let best_errors: Vec<f64> = errors.iter().map(|row| row[best_index]).collect();
    let mut dm_pvalues = vec![f64::NAN; n_models];
    for m in 0..n_models {
        if failed[m] {
            continue;
        }
        dm_pvalues[m] = if m == best_index {
            1.0
        } else {
            let em: Vec<f64> = errors.iter().map(|row| row[m]).collect();
            match diebold_mariano(&em, &best_errors, opts.dm_loss) {
                Ok(t) => t.p_value,
                // Too few origins for the test: only the best survives.
                Err(TrainerError::TooFewOrigins { .. }) => 0.0,
                Err(e) => return Err(e),
            }
        };
    }
    let survivors: Vec<usize> =
        (0..n_models).filter(|&m| m == best_index || (!failed[m] && dm_pvalues[m] >= opts.alpha_dm)).collect();
    Ok(BacktestReport {
        orders,
        actuals,
        forecasts,
        lower,
        upper,
        errors,
        abs_errors,
        failed,
        weights,
        wae,
        best_index,
        dm_pvalues,
        survivors,
        coverage,
        level: opts.level,
        alpha_dm: opts.alpha_dm,
    })
}
