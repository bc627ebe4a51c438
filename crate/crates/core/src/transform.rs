//! Per-series transformation choice and panel standardisation.
//!
//! Each indicator enters the factor model in the form (level, monthly
//! change, annual change or one-month lag) whose absolute correlation with
//! the target is largest.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{MaskedSeries, PanelError, TargetSeries, TimeSeriesPanel};
use crate::stats;

/// Minimum number of months shared by a candidate and the target.
pub const MIN_OVERLAP: usize = 24;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("series {id:?}: fewer than {MIN_OVERLAP} overlapping observations with the target for every transformation")]
    InsufficientOverlap { id: String },
    #[error("series {id:?} has zero variance over its observed cells")]
    ZeroVariance { id: String },
    #[error("series {id:?} has fewer than two observed cells")]
    TooFewObservations { id: String },
    #[error("expected {expected} transformation codes, got {actual}")]
    CodeCount { expected: usize, actual: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformCode {
    /// Level, unchanged.
    #[serde(rename = "n")]
    None,
    /// Monthly percentage variation.
    #[serde(rename = "m")]
    Monthly,
    /// Annual percentage variation.
    #[serde(rename = "a")]
    Annual,
    /// One-month lag.
    #[serde(rename = "l")]
    Lag,
}

impl TransformCode {
    /// Candidates in tie-breaking order.
    pub const ALL: [TransformCode; 4] = [
        TransformCode::None,
        TransformCode::Monthly,
        TransformCode::Annual,
        TransformCode::Lag,
    ];

    pub fn letter(self) -> char {
        match self {
            TransformCode::None => 'n',
            TransformCode::Monthly => 'm',
            TransformCode::Annual => 'a',
            TransformCode::Lag => 'l',
        }
    }
}

impl fmt::Display for TransformCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A cell that could not be transformed because its base value was zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformWarning {
    pub index: usize,
    pub message: String,
}

fn pct_change(series: &MaskedSeries, lag: usize, warnings: &mut Vec<TransformWarning>) -> MaskedSeries {
    let n = series.len();
    let mut values = vec![f64::NAN; n];
    let mut mask = vec![false; n];
    for t in lag..n {
        if let (Some(x), Some(base)) = (series.get(t), series.get(t - lag)) {
            if base == 0.0 {
                warnings.push(TransformWarning {
                    index: t,
                    message: format!("zero base value at offset {lag}; cell masked"),
                });
                continue;
            }
            let v = x / base * 100.0 - 100.0;
            if v.is_finite() {
                values[t] = v;
                mask[t] = true;
            }
        }
    }
    MaskedSeries::new(series.start, values, mask)
}

/// Applies `code` to `series`, returning the transformed series and any
/// cells masked because of zero denominators.
pub fn apply_transform(series: &MaskedSeries, code: TransformCode) -> (MaskedSeries, Vec<TransformWarning>) {
    let mut warnings = Vec::new();
    let out = match code {
        TransformCode::None => series.clone(),
        TransformCode::Monthly => pct_change(series, 1, &mut warnings),
        TransformCode::Annual => pct_change(series, 12, &mut warnings),
        TransformCode::Lag => {
            let n = series.len();
            let mut values = vec![f64::NAN; n];
            let mut mask = vec![false; n];
            for t in 1..n {
                if let Some(x) = series.get(t - 1) {
                    values[t] = x;
                    mask[t] = true;
                }
            }
            MaskedSeries::new(series.start, values, mask)
        }
    };
    (out, warnings)
}

fn overlap_correlation(series: &MaskedSeries, target: &TargetSeries) -> Option<(f64, usize)> {
    let offset = series.start.months_until(target.start);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &y) in target.values.iter().enumerate() {
        let t = offset + k as i64;
        if t < 0 {
            continue;
        }
        if let Some(x) = series.get(t as usize) {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.len() < MIN_OVERLAP {
        return None;
    }
    stats::pearson(&xs, &ys).map(|c| (c, xs.len()))
}

/// Chooses the transformation whose absolute Pearson correlation with the
/// target is largest on the overlapping observed months. Ties keep the
/// earlier code in `n, m, a, l` order. Candidates with fewer than
/// [`MIN_OVERLAP`] shared months or zero variance are skipped.
pub fn select_transform(
    series: &MaskedSeries,
    target: &TargetSeries,
) -> Option<(TransformCode, f64)> {
    let mut best: Option<(TransformCode, f64)> = None;
    for code in TransformCode::ALL {
        let (tx, _) = apply_transform(series, code);
        if let Some((c, _)) = overlap_correlation(&tx, target) {
            match best {
                Some((_, b)) if c.abs() <= b.abs() => {}
                _ => best = Some((code, c)),
            }
        }
    }
    best
}

/// Panel of transformed, standardised series with the statistics needed to
/// map back to transformed units.
#[derive(Debug, Clone)]
pub struct TransformedPanel {
    pub panel: TimeSeriesPanel,
    pub codes: Vec<TransformCode>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Signed correlation with the target for the chosen code, when the
    /// code was selected against a target.
    pub correlations: Vec<Option<f64>>,
    pub warnings: Vec<(String, TransformWarning)>,
}

/// Centres and scales every series over its observed cells, using the
/// population standard deviation.
pub fn standardize(panel: &TimeSeriesPanel) -> Result<TransformedPanel, TransformError> {
    let (t, n) = (panel.n_periods(), panel.n_series());
    let mut values = panel.values().clone();
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for i in 0..n {
        let col = panel.column(i).observed_values();
        let id = panel.meta()[i].id.clone();
        if col.len() < 2 {
            return Err(TransformError::TooFewObservations { id });
        }
        let m = stats::mean(&col);
        let sd = stats::population_variance(&col).sqrt();
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            return Err(TransformError::ZeroVariance { id });
        }
        for r in 0..t {
            if panel.mask()[(r, i)] {
                values[(r, i)] = (values[(r, i)] - m) / sd;
            }
        }
        means.push(m);
        sds.push(sd);
    }
    Ok(TransformedPanel {
        panel: panel.with_values(values, panel.mask().clone())?,
        codes: vec![TransformCode::None; n],
        means,
        sds,
        correlations: vec![None; n],
        warnings: Vec::new(),
    })
}

/// Applies fixed per-series codes, without standardising.
pub fn apply_codes(
    panel: &TimeSeriesPanel,
    codes: &[TransformCode],
) -> Result<(TimeSeriesPanel, Vec<(String, TransformWarning)>), TransformError> {
    if codes.len() != panel.n_series() {
        return Err(TransformError::CodeCount {
            expected: panel.n_series(),
            actual: codes.len(),
        });
    }
    let mut warnings = Vec::new();
    let cols = panel
        .columns()
        .iter()
        .zip(codes)
        .zip(panel.meta())
        .map(|((col, &code), meta)| {
            let (tx, w) = apply_transform(col, code);
            warnings.extend(w.into_iter().map(|w| (meta.id.clone(), w)));
            tx
        })
        .collect();
    let out = TimeSeriesPanel::from_columns(panel.start(), cols, panel.meta().to_vec())?;
    Ok((out, warnings))
}

/// Selects a code per series against `target`, applies it and
/// standardises the result.
pub fn transform_panel(
    panel: &TimeSeriesPanel,
    target: &TargetSeries,
) -> Result<TransformedPanel, TransformError> {
    let mut codes = Vec::with_capacity(panel.n_series());
    let mut correlations = Vec::with_capacity(panel.n_series());
    for (i, meta) in panel.meta().iter().enumerate() {
        let (code, corr) = select_transform(&panel.column(i), target).ok_or_else(|| {
            TransformError::InsufficientOverlap {
                id: meta.id.clone(),
            }
        })?;
        codes.push(code);
        correlations.push(Some(corr));
    }
    let mut out = transform_with_codes(panel, &codes)?;
    out.correlations = correlations;
    Ok(out)
}

/// Applies already-chosen codes and standardises.
pub fn transform_with_codes(
    panel: &TimeSeriesPanel,
    codes: &[TransformCode],
) -> Result<TransformedPanel, TransformError> {
    let (tx, warnings) = apply_codes(panel, codes)?;
    let mut out = standardize(&tx)?;
    out.codes = codes.to_vec();
    out.warnings = warnings;
    Ok(out)
}

/// One row of `transforms.json`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransformReportEntry {
    pub id: String,
    pub code: TransformCode,
    pub correlation: Option<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl TransformedPanel {
    /// Report entries ordered by decreasing absolute correlation.
    pub fn report(&self) -> Vec<TransformReportEntry> {
        let mut rows: Vec<TransformReportEntry> = self
            .panel
            .meta()
            .iter()
            .enumerate()
            .map(|(i, m)| TransformReportEntry {
                id: m.id.clone(),
                code: self.codes[i],
                correlation: self.correlations[i],
                mean: self.means[i],
                sd: self.sds[i],
            })
            .collect();
        rows.sort_by(|a, b| {
            let ka = a.correlation.map(f64::abs).unwrap_or(-1.0);
            let kb = b.correlation.map(f64::abs).unwrap_or(-1.0);
            kb.partial_cmp(&ka).unwrap_or(std::cmp::Ordering::Equal)
        });
        rows
    }

    pub fn values(&self) -> &DMatrix<f64> {
        self.panel.values()
    }
}
