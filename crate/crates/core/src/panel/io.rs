//! CSV and schema ingestion.
//!
//! Panel files have a header `date,<id1>,...,<idN>`; dates are `YYYY/MM`
//! or `YYYY-MM` (daily `YYYY-MM-DD` rows when the schema enables
//! aggregation) and an empty cell means "not available".

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{parse_date, Month, PanelError, SeriesMeta, TargetSeries, TimeSeriesPanel};

/// Publication calendar of the target series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMeta {
    pub id: String,
    pub release_day: u32,
    #[serde(default = "two")]
    pub release_lag_months: u32,
}

fn two() -> u32 {
    2
}

impl Default for TargetMeta {
    fn default() -> Self {
        Self {
            id: "target".into(),
            release_day: 25,
            release_lag_months: 2,
        }
    }
}

/// Ingestion configuration: series metadata and parsing flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSchema {
    pub series: Vec<SeriesMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetMeta>,
    /// Insert all-missing rows for absent months instead of failing.
    #[serde(default)]
    pub fill_gaps: bool,
    /// Rows are daily observations to be averaged into months.
    #[serde(default)]
    pub aggregate_daily: bool,
}

impl IngestSchema {
    pub fn meta_for(&self, id: &str) -> Option<&SeriesMeta> {
        self.series.iter().find(|m| m.id == id)
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        let mut seen = HashSet::new();
        for m in &self.series {
            m.validate()?;
            if !seen.insert(m.id.as_str()) {
                return Err(PanelError::DuplicateId(m.id.clone()));
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File, PanelError> {
    File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_schema(path: &Path) -> Result<IngestSchema, PanelError> {
    let schema: IngestSchema = serde_json::from_reader(open(path)?)
        .map_err(|e| PanelError::Schema(format!("{}: {e}", path.display())))?;
    schema.validate()?;
    Ok(schema)
}

pub fn load_panel(path: &Path, schema: &IngestSchema) -> Result<TimeSeriesPanel, PanelError> {
    read_panel(open(path)?, schema)
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>, PanelError> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(PanelError::NonNumeric {
            row,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

pub fn read_panel<R: Read>(reader: R, schema: &IngestSchema) -> Result<TimeSeriesPanel, PanelError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(PanelError::Empty("panel CSV needs a date column and at least one series".into()));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    let mut meta = Vec::with_capacity(ids.len());
    for id in &ids {
        if id.is_empty() {
            return Err(PanelError::EmptyId);
        }
        if !seen.insert(id.clone()) {
            return Err(PanelError::DuplicateId(id.clone()));
        }
        let m = schema
            .meta_for(id)
            .ok_or_else(|| PanelError::UnknownSeries(id.clone()))?;
        meta.push(m.clone());
    }
    let n = ids.len();

    // month -> per-series (sum, count) so daily rows can be averaged.
    let mut rows: BTreeMap<Month, Vec<(f64, usize)>> = BTreeMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let date = rec.get(0).unwrap_or("");
        let month = if schema.aggregate_daily {
            Month::of_date(parse_date(date)?)
        } else {
            date.parse::<Month>()?
        };
        let entry = match rows.get_mut(&month) {
            Some(acc) if schema.aggregate_daily => acc,
            Some(_) => return Err(PanelError::DuplicateMonth(month)),
            None => rows.entry(month).or_insert_with(|| vec![(0.0, 0); n]),
        };
        for i in 0..n {
            if let Some(v) = parse_cell(rec.get(i + 1).unwrap_or(""), line, &ids[i])? {
                entry[i].0 += v;
                entry[i].1 += 1;
            }
        }
    }
    let (&first, _) = rows
        .iter()
        .next()
        .ok_or_else(|| PanelError::Empty("panel CSV has no data rows".into()))?;
    let (&last, _) = rows.iter().next_back().expect("non-empty");
    if !schema.fill_gaps {
        let months: Vec<Month> = rows.keys().copied().collect();
        for w in months.windows(2) {
            if w[0].succ() != w[1] {
                return Err(PanelError::Gap(w[0], w[1]));
            }
        }
    }
    let t = first.months_until(last) as usize + 1;
    let mut values = DMatrix::from_element(t, n, f64::NAN);
    let mut mask = DMatrix::from_element(t, n, false);
    for (month, acc) in &rows {
        let r = first.months_until(*month) as usize;
        for i in 0..n {
            let (sum, count) = acc[i];
            if count > 0 {
                values[(r, i)] = sum / count as f64;
                mask[(r, i)] = true;
            }
        }
    }
    TimeSeriesPanel::new(first, values, mask, meta)
}

/// Writes the panel in the ingestion CSV shape.
pub fn write_panel<W: Write>(panel: &TimeSeriesPanel, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.ids().iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (t, month) in panel.dates().iter().enumerate() {
        let mut rec = vec![month.to_string()];
        for i in 0..panel.n_series() {
            rec.push(panel.get(t, i).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| PanelError::Io {
        path: "<panel writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn load_target(path: &Path) -> Result<TargetSeries, PanelError> {
    read_target(open(path)?)
}

/// Reads a two-column `date,<id>` target file. Rows must be consecutive
/// months with no blank values.
pub fn read_target<R: Read>(reader: R) -> Result<TargetSeries, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 {
        return Err(PanelError::Schema("target CSV must have exactly two columns".into()));
    }
    let id = headers.get(1).unwrap_or("target").to_string();
    let mut start = None;
    let mut prev: Option<Month> = None;
    let mut values = Vec::new();
    let mut seen = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let m: Month = rec.get(0).unwrap_or("").parse()?;
        if seen.insert(m, ()).is_some() {
            return Err(PanelError::DuplicateMonth(m));
        }
        if let Some(p) = prev {
            if p.succ() != m {
                return Err(PanelError::Gap(p, m));
            }
        }
        let v = parse_cell(rec.get(1).unwrap_or(""), r + 2, &id)?.ok_or_else(|| {
            PanelError::NonNumeric {
                row: r + 2,
                column: id.clone(),
                value: String::new(),
            }
        })?;
        start.get_or_insert(m);
        prev = Some(m);
        values.push(v);
    }
    let start = start.ok_or_else(|| PanelError::Empty("target CSV has no rows".into()))?;
    TargetSeries::new(id, start, values)
}

pub fn write_target<W: Write>(target: &TargetSeries, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", target.id.as_str()])?;
    for (m, v) in target.dates().iter().zip(&target.values) {
        w.write_record([m.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|source| PanelError::Io {
        path: "<target writer>".into(),
        source,
    })?;
    Ok(())
}
