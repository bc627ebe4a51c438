//! Regression of the target on smoothed factors with ARMA(p, q) errors:
//! `y_t = a + b'F_t + u_t`, `φ(L) u_t = γ(L) v_t`, `v_t ~ N(0, σ²)`.
//!
//! Estimation is exact maximum likelihood through a state-space form of the
//! error, with `(a, b, σ²)` concentrated out by GLS and `(φ, γ)` searched in
//! an unconstrained partial-autocorrelation parametrisation.

mod fit;
mod ljung_box;
pub mod optimize;
pub mod params;
pub mod statespace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::fit_armareg;
pub use ljung_box::{ljung_box, LjungBox};
use optimize::BfgsOptions;
use statespace::{predict_ahead, ArmaSystem};

use crate::stats;

#[derive(Debug, Error)]
pub enum ArmaError {
    #[error("orders (p, q) = ({p}, {q}) exceed the maximum {max}")]
    Order { p: usize, q: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sample of {n} observations is too short; at least {needed} are required")]
    TooShort { n: usize, needed: usize },
    #[error("non-finite value in the estimation sample")]
    NonFinite,
    #[error("singular regression design")]
    Singular,
    #[error("no starting value gave a finite likelihood")]
    NoValidStart,
    #[error("optimizer did not converge (best loglik {:.4})", .0.loglik)]
    NotConverged(Box<ArmaRegModel>),
    #[error("forecast needs {needed} factor rows of width {width}")]
    MissingFactorRows { needed: usize, width: usize },
    #[error("Ljung-Box needs 0 < lags < n/2 (lags {lags}, n {n})")]
    Lags { lags: usize, n: usize },
}

impl ArmaError {
    /// Best iterate of a fit that failed to converge.
    pub fn best_iterate(&self) -> Option<&ArmaRegModel> {
        match self {
            ArmaError::NotConverged(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaOptions {
    pub max_order: usize,
    /// Randomised restarts around the Hannan–Rissanen starting values.
    pub restarts: usize,
    pub restart_scale: f64,
    pub seed: u64,
    pub bfgs: BfgsOptions,
    pub compute_se: bool,
    /// Free-parameter start used in place of Hannan–Rissanen when given.
    pub warm_start: Option<Vec<f64>>,
    /// Partial autocorrelation magnitude above which roots count as on the
    /// boundary.
    pub boundary_pacf: f64,
}

impl Default for ArmaOptions {
    fn default() -> Self {
        Self {
            max_order: 4,
            restarts: 5,
            restart_scale: 0.5,
            seed: 0,
            bfgs: BfgsOptions::default(),
            compute_se: true,
            warm_start: None,
            boundary_pacf: 0.995,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaRegModel {
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub factor_coef: Vec<f64>,
    /// `φ_1..φ_p` of `u_t = φ_1 u_{t-1} + ... + γ(L) v_t`.
    pub ar: Vec<f64>,
    /// `γ_1..γ_q` of `γ(L) = 1 + γ_1 L + ... + γ_q L^q`.
    pub ma: Vec<f64>,
    pub innovation_var: f64,
    pub loglik: f64,
    /// Standard errors in the order `(a, b, φ, γ)`.
    pub coef_se: Vec<f64>,
    pub n_obs: usize,
    pub converged: bool,
    pub boundary: bool,
    pub iterations: usize,
    pub free_params: Vec<f64>,
    /// `u_t = y_t − a − b'F_t`.
    pub regression_errors: Vec<f64>,
    /// One-step prediction errors `v_t`.
    pub innovations: Vec<f64>,
    /// One-step predictions; `fitted + innovations = y`.
    pub fitted: Vec<f64>,
    pub end_state: Vec<f64>,
    pub end_cov: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub horizon: usize,
    pub point: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ArmaRegModel {
    pub fn orders(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    /// Number of estimated mean and ARMA coefficients.
    pub fn n_coef(&self) -> usize {
        1 + self.factor_coef.len() + self.p + self.q
    }

    /// Coefficients `(a, b, φ, γ)` in the order of `coef_se`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.factor_coef);
        v.extend(&self.ar);
        v.extend(&self.ma);
        v
    }

    /// Forecasts for `h = 1..=future.len()`, each row holding the factor
    /// values at that horizon. Intervals ignore parameter uncertainty.
    pub fn forecast(&self, future: &[Vec<f64>], level: f64) -> Result<Vec<ForecastPoint>, ArmaError> {
        let width = self.factor_coef.len();
        if future.is_empty() || future.iter().any(|row| row.len() != width || row.iter().any(|v| !v.is_finite())) {
            return Err(ArmaError::MissingFactorRows {
                needed: future.len().max(1),
                width,
            });
        }
        let sys = ArmaSystem::new(&self.ar, &self.ma).expect("fitted system is stationary");
        let z = stats::two_sided_z(level);
        let ahead = predict_ahead(&sys, &self.end_state, &self.end_cov, future.len());
        Ok(future
            .iter()
            .zip(ahead)
            .enumerate()
            .map(|(h, (row, (u, var)))| {
                let mean = self.intercept + self.factor_coef.iter().zip(row).map(|(b, f)| b * f).sum::<f64>();
                let point = mean + u;
                let variance = self.innovation_var * var;
                let sd = variance.sqrt();
                ForecastPoint {
                    horizon: h + 1,
                    point,
                    variance,
                    lower: point - z * sd,
                    upper: point + z * sd,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests;
