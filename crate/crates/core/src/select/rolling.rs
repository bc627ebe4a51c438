use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{lasso_path_cv, CvOptions};
use super::SelectError;
use crate::panel::{TargetSeries, TimeSeriesPanel};
use crate::stats;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionResult {
    pub ids: Vec<String>,
    /// Row `h` holds the non-zero indicators of window `h + 1`.
    pub indicator_matrix: Vec<Vec<bool>>,
    pub frequencies: Vec<usize>,
    pub threshold: f64,
    pub selected_ids: Vec<String>,
    pub lambdas: Vec<f64>,
}

impl SelectionResult {
    pub fn is_selected(&self, id: &str) -> bool {
        self.selected_ids.iter().any(|s| s == id)
    }
}

/// Column-standardises `w` with the population convention; constant
/// columns are left at zero.
fn standardize_columns(w: &mut DMatrix<f64>) {
    let t = w.nrows() as f64;
    for mut col in w.column_iter_mut() {
        let m = col.sum() / t;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / t).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

/// Indicator vector for one window of `n` leading target observations.
fn window_indicators(
    y: &[f64],
    rows: &[Option<Vec<Option<f64>>>],
    k: usize,
    n: usize,
    opts: &CvOptions,
) -> Result<(Vec<bool>, f64), SelectError> {
    let window = &rows[..n];
    // Candidates must be observed throughout the window to enter it.
    let usable: Vec<usize> = (0..k)
        .filter(|&j| window.iter().all(|r| matches!(r, Some(v) if v[j].is_some())))
        .collect();
    let mut ind = vec![false; k];
    if usable.is_empty() {
        return Ok((ind, f64::NAN));
    }
    let mut w = DMatrix::from_fn(n, usable.len(), |i, c| {
        window[i].as_ref().expect("checked")[usable[c]].expect("checked")
    });
    standardize_columns(&mut w);
    let cv = lasso_path_cv(&y[..n], &w, opts)?;
    for (c, &j) in usable.iter().enumerate() {
        ind[j] = cv.best().coefficients[c] != 0.0;
    }
    Ok((ind, cv.lambda_opt))
}

/// Rolling-window lasso screen: window `h = 1..=h_g` uses the first
/// `T - h_g + h` target months, and candidates whose selection count
/// strictly exceeds the `(1 - alpha)` quantile of all counts are kept.
pub fn rolling_select(
    target: &TargetSeries,
    candidates: &TimeSeriesPanel,
    h_g: usize,
    alpha: f64,
    opts: &CvOptions,
) -> Result<SelectionResult, SelectError> {
    let t = target.len();
    if h_g == 0 || h_g >= t {
        return Err(SelectError::WindowTooLarge { h_g, sample: t });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SelectError::Alpha(alpha));
    }
    let k = candidates.n_series();
    if k == 0 {
        return Err(SelectError::NoCandidates);
    }
    let rows: Vec<Option<Vec<Option<f64>>>> = target
        .dates()
        .into_iter()
        .map(|m| {
            candidates
                .row_of(m)
                .map(|r| (0..k).map(|j| candidates.get(r, j)).collect())
        })
        .collect();
    let smallest = t - h_g + 1;
    if smallest < opts.n_folds {
        return Err(SelectError::WindowTooLarge { h_g, sample: t });
    }
    let windows: Vec<(Vec<bool>, f64)> = (1..=h_g)
        .into_par_iter()
        .map(|h| window_indicators(&target.values, &rows, k, t - h_g + h, opts))
        .collect::<Result<_, _>>()?;
    let (indicator_matrix, lambdas): (Vec<Vec<bool>>, Vec<f64>) = windows.into_iter().unzip();
    let frequencies: Vec<usize> = (0..k)
        .map(|j| indicator_matrix.iter().filter(|r| r[j]).count())
        .collect();
    let freq_f: Vec<f64> = frequencies.iter().map(|&f| f as f64).collect();
    let threshold = stats::quantile(&freq_f, 1.0 - alpha);
    let ids: Vec<String> = candidates.ids().iter().map(|s| s.to_string()).collect();
    let selected_ids = ids
        .iter()
        .zip(&frequencies)
        .filter(|(_, &f)| f as f64 > threshold)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(SelectionResult {
        ids,
        indicator_matrix,
        frequencies,
        threshold,
        selected_ids,
        lambdas,
    })
}
