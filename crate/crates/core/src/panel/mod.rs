//! Dated indicator panel with a per-cell availability mask.
//!
//! The most recent months of a panel are usually incomplete because each
//! indicator is published with its own delay. Cells that are not available
//! are flagged in the mask; their stored value is a NaN sentinel that no
//! public operation reads.

mod io;
mod month;

use std::collections::HashSet;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    load_panel, load_schema, load_target, read_panel, read_target, write_panel, write_target,
    IngestSchema, TargetMeta,
};
pub use month::{parse_date, Month};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("malformed date {0:?}")]
    MalformedDate(String),
    #[error("duplicate series id {0:?}")]
    DuplicateId(String),
    #[error("empty series id")]
    EmptyId,
    #[error("series {id:?}: release day {day} outside [1, 31]")]
    ReleaseDay { id: String, day: u32 },
    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("gap in monthly grid between {0} and {1}")]
    Gap(Month, Month),
    #[error("duplicate month {0}")]
    DuplicateMonth(Month),
    #[error("column {0:?} is not described by the schema")]
    UnknownSeries(String),
    #[error("unknown series id {0:?}")]
    NoSuchSeries(String),
    #[error("month {0} outside the panel range")]
    MonthOutOfRange(Month),
    #[error("as-of date {0} precedes the panel")]
    AsOfBeforePanel(NaiveDate),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("target and panel are not aligned: {0}")]
    Alignment(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Traditional,
    HighFreqTraditional,
    HighFreqNontraditional,
}

impl Block {
    pub fn is_nontraditional(self) -> bool {
        matches!(self, Block::HighFreqNontraditional)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignHint {
    #[default]
    Direct,
    Inverse,
}

fn default_lag() -> u32 {
    1
}

/// Per-series metadata: block membership and release calendar.
///
/// The value for reference month `t` is published on day `release_day` of
/// month `t + release_lag_months`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub id: String,
    pub block: Block,
    pub release_day: u32,
    #[serde(default = "default_lag")]
    pub release_lag_months: u32,
    #[serde(default)]
    pub sign_hint: SignHint,
    /// Whether the series enters the LASSO topic screen. Defaults to
    /// membership of the nontraditional block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasso_candidate: Option<bool>,
}

impl SeriesMeta {
    pub fn new(id: impl Into<String>, block: Block, release_day: u32) -> Self {
        Self {
            id: id.into(),
            block,
            release_day,
            release_lag_months: 1,
            sign_hint: SignHint::Direct,
            lasso_candidate: None,
        }
    }

    pub fn is_lasso_candidate(&self) -> bool {
        self.lasso_candidate
            .unwrap_or_else(|| self.block.is_nontraditional())
    }

    /// Publication date of the value for `month`.
    pub fn release_date(&self, month: Month) -> NaiveDate {
        month
            .offset(self.release_lag_months as i64)
            .day(self.release_day)
    }

    fn validate(&self) -> Result<(), PanelError> {
        if self.id.trim().is_empty() {
            return Err(PanelError::EmptyId);
        }
        if !(1..=31).contains(&self.release_day) {
            return Err(PanelError::ReleaseDay {
                id: self.id.clone(),
                day: self.release_day,
            });
        }
        Ok(())
    }
}

/// A single dated series with availability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSeries {
    pub start: Month,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedSeries {
    pub fn new(start: Month, values: Vec<f64>, mask: Vec<bool>) -> Self {
        assert_eq!(values.len(), mask.len());
        let values = values
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v } else { f64::NAN })
            .collect();
        Self {
            start,
            values,
            mask,
        }
    }

    /// Fully observed series.
    pub fn observed(start: Month, values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        Self::new(start, values, mask)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.mask.get(t).copied().unwrap_or(false).then(|| self.values[t])
    }

    pub fn observed_values(&self) -> Vec<f64> {
        (0..self.len()).filter_map(|t| self.get(t)).collect()
    }
}

/// Dated T×N panel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    start: Month,
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    meta: Vec<SeriesMeta>,
}

impl TimeSeriesPanel {
    pub fn new(
        start: Month,
        values: DMatrix<f64>,
        mask: DMatrix<bool>,
        meta: Vec<SeriesMeta>,
    ) -> Result<Self, PanelError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(PanelError::Empty("panel needs T >= 1 and N >= 1".into()));
        }
        if values.shape() != mask.shape() || values.ncols() != meta.len() {
            return Err(PanelError::Shape(format!(
                "values {:?}, mask {:?}, {} series",
                values.shape(),
                mask.shape(),
                meta.len()
            )));
        }
        let mut seen = HashSet::new();
        for m in &meta {
            m.validate()?;
            if !seen.insert(m.id.clone()) {
                return Err(PanelError::DuplicateId(m.id.clone()));
            }
        }
        let mut values = values;
        for (v, &ok) in values.iter_mut().zip(mask.iter()) {
            if !ok || !v.is_finite() {
                *v = f64::NAN;
            }
        }
        // A non-finite value is never treated as observed.
        let mask = DMatrix::from_iterator(
            mask.nrows(),
            mask.ncols(),
            mask.iter().zip(values.iter()).map(|(&m, v)| m && v.is_finite()),
        );
        Ok(Self {
            start,
            values,
            mask,
            meta,
        })
    }

    /// Builds a panel from per-series columns sharing `start` and length.
    pub fn from_columns(
        start: Month,
        columns: Vec<MaskedSeries>,
        meta: Vec<SeriesMeta>,
    ) -> Result<Self, PanelError> {
        let t = columns.first().map(|c| c.len()).unwrap_or(0);
        if columns.iter().any(|c| c.len() != t || c.start != start) {
            return Err(PanelError::Shape("columns differ in start or length".into()));
        }
        let n = columns.len();
        let values = DMatrix::from_fn(t, n, |r, c| columns[c].values[r]);
        let mask = DMatrix::from_fn(t, n, |r, c| columns[c].mask[r]);
        Self::new(start, values, mask, meta)
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.n_periods() as i64 - 1)
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn dates(&self) -> Vec<Month> {
        (0..self.n_periods())
            .map(|t| self.start.offset(t as i64))
            .collect()
    }

    pub fn meta(&self) -> &[SeriesMeta] {
        &self.meta
    }

    pub fn ids(&self) -> Vec<&str> {
        self.meta.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.id == id)
    }

    /// Raw value matrix; masked cells hold the NaN sentinel.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.mask[(t, i)].then(|| self.values[(t, i)])
    }

    pub fn row_of(&self, month: Month) -> Option<usize> {
        let d = self.start.months_until(month);
        (d >= 0 && (d as usize) < self.n_periods()).then_some(d as usize)
    }

    pub fn column(&self, i: usize) -> MaskedSeries {
        MaskedSeries {
            start: self.start,
            values: self.values.column(i).iter().copied().collect(),
            mask: self.mask.column(i).iter().copied().collect(),
        }
    }

    pub fn columns(&self) -> Vec<MaskedSeries> {
        (0..self.n_series()).map(|i| self.column(i)).collect()
    }

    /// Sub-panel with the given column indices, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self, PanelError> {
        let cols = idx.iter().map(|&i| self.column(i)).collect();
        let meta = idx.iter().map(|&i| self.meta[i].clone()).collect();
        Self::from_columns(self.start, cols, meta)
    }

    pub fn select_ids(&self, ids: &[&str]) -> Result<Self, PanelError> {
        let idx = ids
            .iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| PanelError::NoSuchSeries(id.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.select_columns(&idx)
    }

    /// Restricts the panel to `[from, to]`, padding with unavailable rows
    /// where the requested range extends beyond the data.
    pub fn with_range(&self, from: Month, to: Month) -> Result<Self, PanelError> {
        let len = from.months_until(to) + 1;
        if len <= 0 {
            return Err(PanelError::Empty(format!("range {from}..{to}")));
        }
        let len = len as usize;
        let n = self.n_series();
        let mut values = DMatrix::from_element(len, n, f64::NAN);
        let mut mask = DMatrix::from_element(len, n, false);
        for r in 0..len {
            if let Some(src) = self.row_of(from.offset(r as i64)) {
                for i in 0..n {
                    values[(r, i)] = self.values[(src, i)];
                    mask[(r, i)] = self.mask[(src, i)];
                }
            }
        }
        Self::new(from, values, mask, self.meta.clone())
    }

    /// Copy with additional cells masked.
    pub fn masked_where(&self, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for t in 0..self.n_periods() {
            for i in 0..self.n_series() {
                if out.mask[(t, i)] && f(t, i) {
                    out.mask[(t, i)] = false;
                    out.values[(t, i)] = f64::NAN;
                }
            }
        }
        out
    }

    pub fn with_values(&self, values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self, PanelError> {
        Self::new(self.start, values, mask, self.meta.clone())
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Masks every cell whose publication date falls after `as_of`.
pub fn apply_vintage(panel: &TimeSeriesPanel, as_of: NaiveDate) -> Result<TimeSeriesPanel, PanelError> {
    if as_of < panel.start().first_day() {
        return Err(PanelError::AsOfBeforePanel(as_of));
    }
    let dates = panel.dates();
    Ok(panel.masked_where(|t, i| panel.meta()[i].release_date(dates[t]) > as_of))
}

/// Share of series observed in `month`.
pub fn availability_ratio(panel: &TimeSeriesPanel, month: Month) -> Result<f64, PanelError> {
    let t = panel
        .row_of(month)
        .ok_or(PanelError::MonthOutOfRange(month))?;
    let observed = (0..panel.n_series()).filter(|&i| panel.mask()[(t, i)]).count();
    Ok(observed as f64 / panel.n_series() as f64)
}

/// Monthly target in annual-percent-variation units; fully observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    pub id: String,
    pub start: Month,
    pub values: Vec<f64>,
}

impl TargetSeries {
    pub fn new(id: impl Into<String>, start: Month, values: Vec<f64>) -> Result<Self, PanelError> {
        if values.is_empty() {
            return Err(PanelError::Empty("target".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PanelError::Empty("target contains missing values".into()));
        }
        Ok(Self {
            id: id.into(),
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.values.len() as i64 - 1)
    }

    pub fn dates(&self) -> Vec<Month> {
        (0..self.len()).map(|t| self.start.offset(t as i64)).collect()
    }

    /// Leading `len` observations.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            id: self.id.clone(),
            start: self.start,
            values: self.values[..len.min(self.len())].to_vec(),
        }
    }

    /// Observations published on or before `as_of` under `meta`'s calendar.
    pub fn vintage(&self, meta: &TargetMeta, as_of: NaiveDate) -> Result<Self, PanelError> {
        let keep = self
            .dates()
            .iter()
            .take_while(|&&m| {
                m.offset(meta.release_lag_months as i64).day(meta.release_day) <= as_of
            })
            .count();
        if keep == 0 {
            return Err(PanelError::Empty(format!("no target value released by {as_of}")));
        }
        Ok(self.truncated(keep))
    }
}

/// Aligns a panel with a target so that the panel covers the target's
/// months plus the two open months that follow (`T* = T - 2`).
///
/// The panel is trimmed at the front to the target's first month and
/// padded with unavailable rows at the back if it ends early.
pub fn align_to_target(
    panel: &TimeSeriesPanel,
    target: &TargetSeries,
) -> Result<TimeSeriesPanel, PanelError> {
    if target.start < panel.start() {
        return Err(PanelError::Alignment(format!(
            "target starts {} before the panel ({})",
            target.start,
            panel.start()
        )));
    }
    let end = target.end().offset(2);
    if panel.end() > end {
        return Err(PanelError::Alignment(format!(
            "panel runs to {} but the target ends {}; expected the panel to end at {}",
            panel.end(),
            target.end(),
            end
        )));
    }
    panel.with_range(target.start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn month(y: i32, m: u32) -> Month {
        Month::new(y, m).unwrap()
    }

    fn two_series_panel() -> TimeSeriesPanel {
        let mut a = SeriesMeta::new("a", Block::Traditional, 1);
        a.release_lag_months = 1;
        let b = SeriesMeta::new("b", Block::Traditional, 16);
        let values = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mask = DMatrix::from_element(3, 2, true);
        TimeSeriesPanel::new(month(2020, 1), values, mask, vec![a, b]).unwrap()
    }

    #[test]
    fn vintage_day_after_close_releases_day_one_series() {
        let p = two_series_panel();
        // March closes; April 1 is the first day after.
        let v = apply_vintage(&p, NaiveDate::from_ymd_opt(2020, 4, 1).unwrap()).unwrap();
        assert!(v.mask()[(2, 0)]);
        assert!(!v.mask()[(2, 1)]);
    }

    #[test]
    fn vintage_mid_month_releases_exactly_one_of_two() {
        let p = two_series_panel();
        let v = apply_vintage(&p, NaiveDate::from_ymd_opt(2020, 4, 10).unwrap()).unwrap();
        let last: Vec<bool> = (0..2).map(|i| v.mask()[(2, i)]).collect();
        assert_eq!(last, vec![true, false]);
        assert_eq!(availability_ratio(&v, month(2020, 3)).unwrap(), 0.5);
        assert_eq!(availability_ratio(&v, month(2020, 2)).unwrap(), 1.0);
    }

    #[test]
    fn vintage_before_every_release_masks_last_month() {
        let p = two_series_panel();
        let v = apply_vintage(&p, NaiveDate::from_ymd_opt(2020, 3, 31).unwrap()).unwrap();
        assert_eq!(availability_ratio(&v, month(2020, 3)).unwrap(), 0.0);
        assert!(apply_vintage(&p, NaiveDate::from_ymd_opt(2019, 12, 31).unwrap()).is_err());
    }

    #[test]
    fn availability_out_of_range() {
        let p = two_series_panel();
        assert!(matches!(
            availability_ratio(&p, month(2021, 1)),
            Err(PanelError::MonthOutOfRange(_))
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = SeriesMeta::new("a", Block::Traditional, 1);
        let r = TimeSeriesPanel::new(
            month(2020, 1),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(1, 2, true),
            vec![a.clone(), a],
        );
        assert!(matches!(r, Err(PanelError::DuplicateId(_))));
    }

    #[test]
    fn release_day_validated() {
        let a = SeriesMeta::new("a", Block::Traditional, 32);
        let r = TimeSeriesPanel::new(
            month(2020, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, true),
            vec![a],
        );
        assert!(matches!(r, Err(PanelError::ReleaseDay { .. })));
    }

    #[test]
    fn masked_cells_hold_sentinel() {
        let a = SeriesMeta::new("a", Block::Traditional, 1);
        let mut mask = DMatrix::from_element(2, 1, true);
        mask[(1, 0)] = false;
        let p = TimeSeriesPanel::new(month(2020, 1), DMatrix::from_element(2, 1, 3.0), mask, vec![a])
            .unwrap();
        assert!(p.values()[(1, 0)].is_nan());
        assert_eq!(p.get(1, 0), None);
        assert_eq!(p.get(0, 0), Some(3.0));
    }

    #[test]
    fn align_pads_two_open_months() {
        let p = two_series_panel();
        let y = TargetSeries::new("y", month(2020, 1), vec![1.0, 2.0]).unwrap();
        let a = align_to_target(&p, &y).unwrap();
        assert_eq!(a.n_periods(), 4);
        assert_eq!(a.end(), month(2020, 4));
        assert!(!a.mask()[(3, 0)]);
        let y1 = TargetSeries::new("y", month(2020, 1), vec![1.0]).unwrap();
        assert_eq!(align_to_target(&p, &y1).unwrap().n_periods(), 3);
        let early = TargetSeries::new("y", month(2019, 12), vec![1.0]).unwrap();
        assert!(align_to_target(&p, &early).is_err());
        let short = TargetSeries::new("y", month(2019, 12), vec![]);
        assert!(short.is_err() || align_to_target(&p, &short.unwrap()).is_err());
    }

    #[test]
    fn target_vintage_respects_publication_lag() {
        let y = TargetSeries::new("y", month(2020, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let meta = TargetMeta {
            id: "y".into(),
            release_day: 25,
            release_lag_months: 2,
        };
        // February is published on April 25.
        let v = y.vintage(&meta, NaiveDate::from_ymd_opt(2020, 4, 25).unwrap()).unwrap();
        assert_eq!(v.end(), month(2020, 2));
        let v = y.vintage(&meta, NaiveDate::from_ymd_opt(2020, 4, 24).unwrap()).unwrap();
        assert_eq!(v.end(), month(2020, 1));
    }
}
