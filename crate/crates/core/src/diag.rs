//! Unit-root diagnostics: augmented Dickey–Fuller with BIC lag selection
//! and MacKinnon (1994) p-values, and a Fisher-type pooled test on
//! idiosyncratic residuals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

pub const MIN_LENGTH: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("series of length {n} is too short; at least {needed} observations are required")]
    TooShort { n: usize, needed: usize },
    #[error("non-finite value in series")]
    NonFinite,
    #[error("degenerate series {0}: the ADF regression is singular")]
    Degenerate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdfSpec {
    None,
    #[default]
    Constant,
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRootResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags_used: usize,
    pub n_obs: usize,
    pub spec: AdfSpec,
}

/// Default maximum lag `floor(12 (T/100)^{1/4})`.
pub fn default_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

struct Surface {
    max: f64,
    min: f64,
    star: f64,
    small: [f64; 3],
    large: [f64; 4],
}

fn surface(spec: AdfSpec) -> Surface {
    match spec {
        AdfSpec::None => Surface {
            max: f64::INFINITY,
            min: -19.04,
            star: -1.04,
            small: [0.6344, 1.2378, 3.2496e-2],
            large: [0.4797, 0.93557, -0.06999, 0.033066],
        },
        AdfSpec::Constant => Surface {
            max: 2.74,
            min: -18.83,
            star: -1.61,
            small: [2.1659, 1.4412, 3.8269e-2],
            large: [1.7339, 0.93202, -0.12745, -0.010368],
        },
        AdfSpec::Trend => Surface {
            max: 0.7,
            min: -16.18,
            star: -2.89,
            small: [3.2512, 1.6047, 4.9588e-2],
            large: [2.5261, 0.61654, -0.37956, -0.060285],
        },
    }
}

/// MacKinnon's approximate asymptotic p-value for a Dickey–Fuller `τ`.
pub fn mackinnon_p(tau: f64, spec: AdfSpec) -> f64 {
    let s = surface(spec);
    if tau > s.max {
        return 1.0;
    }
    if tau < s.min {
        return 0.0;
    }
    let poly = |c: &[f64]| c.iter().rev().fold(0.0, |acc, ci| acc * tau + ci);
    let z = if tau <= s.star { poly(&s.small) } else { poly(&s.large) };
    stats::normal_cdf(z)
}

struct AdfFit {
    tau: f64,
    rss: f64,
    nobs: usize,
    ncoef: usize,
}

/// ADF regression with `lags` augmentation terms on observations
/// `start..n` of the differenced model.
fn adf_regression(y: &[f64], lags: usize, start: usize, spec: AdfSpec) -> Option<AdfFit> {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    // Row s predicts dy[s] from y[s] and dy[s-1..s-lags].
    let rows: Vec<usize> = (start.max(lags)..dy.len()).collect();
    let det = match spec {
        AdfSpec::None => 0,
        AdfSpec::Constant => 1,
        AdfSpec::Trend => 2,
    };
    let k = 1 + lags + det;
    let nobs = rows.len();
    if nobs <= k {
        return None;
    }
    let x = DMatrix::from_fn(nobs, k, |i, j| {
        let s = rows[i];
        if j == 0 {
            y[s]
        } else if j <= lags {
            dy[s - j]
        } else if j == lags + 1 {
            1.0
        } else {
            s as f64
        }
    });
    let target = DVector::from_fn(nobs, |i, _| dy[rows[i]]);
    let xtx = x.transpose() * &x;
    let chol = xtx.clone().cholesky()?;
    let beta = chol.solve(&(x.transpose() * &target));
    let resid = &target - &x * &beta;
    let rss = resid.norm_squared();
    let s2 = rss / (nobs - k) as f64;
    let inv = chol.inverse();
    let se = (s2 * inv[(0, 0)]).sqrt();
    if !(se > 0.0) || !se.is_finite() {
        return None;
    }
    Some(AdfFit {
        tau: beta[0] / se,
        rss,
        nobs,
        ncoef: k,
    })
}

fn bic(fit: &AdfFit) -> f64 {
    let n = fit.nobs as f64;
    n * (fit.rss / n).ln() + fit.ncoef as f64 * n.ln()
}

/// Augmented Dickey–Fuller test. The lag order minimises BIC over
/// `0..=max_lags` on a common sample and is then refitted on all usable
/// observations.
pub fn adf_test(series: &[f64], max_lags: Option<usize>, spec: AdfSpec) -> Result<UnitRootResult, DiagError> {
    adf_test_indexed(series, max_lags, spec, 0)
}

fn adf_test_indexed(series: &[f64], max_lags: Option<usize>, spec: AdfSpec, id: usize) -> Result<UnitRootResult, DiagError> {
    let n = series.len();
    if n < MIN_LENGTH {
        return Err(DiagError::TooShort { n, needed: MIN_LENGTH });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DiagError::NonFinite);
    }
    // Keep at least ten residual degrees of freedom.
    let cap = (n - 1).saturating_sub(14) / 2;
    let max_lags = max_lags.unwrap_or_else(|| default_max_lags(n)).min(cap);
    let mut best: Option<(usize, f64)> = None;
    for lags in 0..=max_lags {
        if let Some(fit) = adf_regression(series, lags, max_lags, spec) {
            let b = bic(&fit);
            if best.is_none_or(|(_, bb)| b < bb) {
                best = Some((lags, b));
            }
        }
    }
    let (lags, _) = best.ok_or(DiagError::Degenerate(id))?;
    let fit = adf_regression(series, lags, lags, spec).ok_or(DiagError::Degenerate(id))?;
    Ok(UnitRootResult {
        statistic: fit.tau,
        p_value: mackinnon_p(fit.tau, spec),
        lags_used: lags,
        n_obs: fit.nobs,
        spec,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledResult {
    pub statistic: f64,
    pub p_value: f64,
    pub series_p_values: Vec<f64>,
}

/// Smallest per-series p-value entering the log, so a zero p-value does not
/// make the statistic infinite.
const P_FLOOR: f64 = 1e-16;

/// Pools per-series ADF p-values of the residual columns by
/// `(−2 Σ ln p_i − 2N) / √(4N)`, rejecting a common unit root for large
/// values against the standard normal.
pub fn pooled_idio_test(residuals: &DMatrix<f64>, spec: AdfSpec) -> Result<PooledResult, DiagError> {
    let n_series = residuals.ncols();
    if residuals.nrows() < MIN_LENGTH {
        return Err(DiagError::TooShort {
            n: residuals.nrows(),
            needed: MIN_LENGTH,
        });
    }
    let series_p_values: Vec<f64> = (0..n_series)
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = residuals.column(i).iter().copied().collect();
            if stats::population_variance(&col) == 0.0 {
                return Err(DiagError::Degenerate(i));
            }
            adf_test_indexed(&col, None, spec, i).map(|r| r.p_value)
        })
        .collect::<Result<_, _>>()?;
    let nf = n_series as f64;
    let sum_log: f64 = series_p_values.iter().map(|p| p.max(P_FLOOR).ln()).sum();
    let statistic = (-2.0 * sum_log - 2.0 * nf) / (4.0 * nf).sqrt();
    Ok(PooledResult {
        statistic,
        p_value: 1.0 - stats::normal_cdf(statistic),
        series_p_values,
    })
}
