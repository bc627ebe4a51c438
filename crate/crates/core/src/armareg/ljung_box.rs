use serde::{Deserialize, Serialize};

use super::ArmaError;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `Q = n(n+2) Σ_{k≤lags} ρ_k² / (n−k)` against χ² with `lags − fitted_params`
/// degrees of freedom (floored at 1).
pub fn ljung_box(residuals: &[f64], lags: usize, fitted_params: usize) -> Result<LjungBox, ArmaError> {
    let n = residuals.len();
    if lags == 0 || 2 * lags >= n {
        return Err(ArmaError::Lags { lags, n });
    }
    let mean = stats::mean(residuals);
    let dev: Vec<f64> = residuals.iter().map(|x| x - mean).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    let nf = n as f64;
    let mut q = 0.0;
    if c0 > 0.0 {
        for k in 1..=lags {
            let ck: f64 = dev[k..].iter().zip(&dev).map(|(a, b)| a * b).sum();
            let rho = ck / c0;
            q += rho * rho / (nf - k as f64);
        }
    }
    let statistic = nf * (nf + 2.0) * q;
    let df = lags.saturating_sub(fitted_params).max(1);
    Ok(LjungBox {
        statistic,
        df,
        p_value: stats::chi_squared_sf(statistic, df as f64),
    })
}
