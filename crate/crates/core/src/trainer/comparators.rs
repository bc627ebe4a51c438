use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::armareg::{fit_armareg, ArmaOptions};
use crate::stats;

/// Equal-weight factor: the mean of each row's observed cells, NaN for
/// rows with none.
pub fn naive_factor(values: &DMatrix<f64>, mask: &DMatrix<bool>) -> Vec<f64> {
    (0..values.nrows())
        .map(|t| {
            let obs: Vec<f64> = (0..values.ncols()).filter(|&i| mask[(t, i)]).map(|i| values[(t, i)]).collect();
            if obs.is_empty() {
                f64::NAN
            } else {
                stats::mean(&obs)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsBacktest {
    pub forecasts: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub errors: Vec<f64>,
    pub mae: f64,
}

/// One-step backtest of the plain regression `y = a + b'x + v`.
pub fn ols_backtest(y: &[f64], x: &[Vec<f64>], h_t: usize, level: f64) -> Result<OlsBacktest, TrainerError> {
    let n = y.len();
    if h_t == 0 || h_t >= n {
        return Err(TrainerError::HorizonTooLong { h_t, n });
    }
    let opts = ArmaOptions::default();
    let mut out = OlsBacktest {
        forecasts: Vec::with_capacity(h_t),
        lower: Vec::with_capacity(h_t),
        upper: Vec::with_capacity(h_t),
        errors: Vec::with_capacity(h_t),
        mae: 0.0,
    };
    for h in 1..=h_t {
        let n_train = n - h_t + h - 1;
        let xs: Vec<Vec<f64>> = x.iter().map(|c| c[..n_train].to_vec()).collect();
        let m = fit_armareg(&y[..n_train], &xs, 0, 0, &opts)?;
        let fc = m.forecast(&[x.iter().map(|c| c[n_train]).collect()], level)?[0];
        out.forecasts.push(fc.point);
        out.lower.push(fc.lower);
        out.upper.push(fc.upper);
        out.errors.push(y[n_train] - fc.point);
    }
    out.mae = stats::mean(&out.errors.iter().map(|e| e.abs()).collect::<Vec<_>>());
    Ok(out)
}
