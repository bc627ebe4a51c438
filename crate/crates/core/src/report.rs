//! Machine-readable outputs of a run: JSON reports and plot-ready CSVs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::armareg::ArmaRegModel;
use crate::config::RunConfig;
use crate::factor::FactorModel;
use crate::panel::{write_panel, write_target, Month, PanelError, TimeSeriesPanel};
use crate::pipeline::{factor_columns, ComparatorRow, NowcastRun, Prepared, VintageRow};
use crate::trainer::{order_label, BacktestReport, NowcastResult};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Collects the names of the files written to one run directory.
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn months(start: Month, n: usize) -> Vec<Month> {
    (0..n).map(|t| start.offset(t as i64)).collect()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, ReportError> {
        std::fs::create_dir_all(root).map_err(|source| ReportError::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn file(&mut self, name: &str) -> Result<std::fs::File, ReportError> {
        let path = self.root.join(name);
        let f = std::fs::File::create(&path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(f)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        use std::io::Write;
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f).map_err(|source| ReportError::Io {
            path: name.into(),
            source,
        })
    }

    pub fn csv(&mut self, name: &str, header: &[String], body: Vec<Vec<String>>) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        w.write_record(header)?;
        for r in body {
            w.write_record(&r)?;
        }
        w.flush().map_err(|source| ReportError::Io {
            path: name.into(),
            source,
        })
    }

    pub fn panel(&mut self, name: &str, panel: &TimeSeriesPanel) -> Result<(), ReportError> {
        let f = self.file(name)?;
        Ok(write_panel(panel, f)?)
    }

    pub fn target(&mut self, name: &str, target: &crate::panel::TargetSeries) -> Result<(), ReportError> {
        let f = self.file(name)?;
        Ok(write_target(target, f)?)
    }

    /// `manifest.json`: the command, crate version, effective configuration
    /// and every file written so far.
    pub fn manifest(&mut self, command: &str, cfg: &RunConfig) -> Result<(), ReportError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            package: &'static str,
            version: &'static str,
            config: &'a RunConfig,
            outputs: Vec<String>,
        }
        let m = Manifest {
            command,
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            outputs: self.written.clone(),
        };
        self.json("manifest.json", &m)
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn write_transforms(dir: &mut RunDir, prep: &Prepared) -> Result<(), ReportError> {
    dir.json("transforms.json", &prep.transformed.report())
}

pub fn write_selection(dir: &mut RunDir, prep: &Prepared) -> Result<(), ReportError> {
    #[derive(Serialize)]
    struct Selection<'a> {
        final_ids: &'a [String],
        screen: Option<&'a crate::select::SelectionResult>,
    }
    dir.json(
        "selection.json",
        &Selection {
            final_ids: &prep.final_ids,
            screen: prep.selection.as_ref(),
        },
    )
}

#[derive(Serialize)]
struct FactorReport<'a> {
    r: usize,
    ids: &'a [String],
    dates: Vec<Month>,
    loadings: Vec<Vec<f64>>,
    loading_lower: Vec<Vec<f64>>,
    loading_upper: Vec<Vec<f64>>,
    smoothed_loadings: Vec<Vec<f64>>,
    mc_objective: f64,
    idio_variances: &'a [f64],
    static_factors: Vec<Vec<f64>>,
    factor_lower: Vec<Vec<f64>>,
    factor_upper: Vec<Vec<f64>>,
    smoothed_factors: Vec<Vec<f64>>,
    smoothed_variances: Vec<Vec<f64>>,
    var_coefficients: Vec<Vec<Vec<f64>>>,
    eta_cov: Vec<Vec<f64>>,
    factor_cov: Vec<Vec<f64>>,
    spectral_radius: f64,
    balanced_rows: Vec<Month>,
    eigen: Option<&'a crate::factor::EigenReport>,
}

pub fn write_factor(dir: &mut RunDir, prep: &Prepared, model: &FactorModel) -> Result<(), ReportError> {
    let start = prep.x.start();
    let t = prep.x.n_periods();
    let b = &model.bands;
    let report = FactorReport {
        r: model.r,
        ids: &prep.final_ids,
        dates: months(start, t),
        loadings: rows(&model.loadings),
        loading_lower: rows(&b.loading_lower),
        loading_upper: rows(&b.loading_upper),
        smoothed_loadings: rows(&model.smoothed_loadings),
        mc_objective: model.mc_objective,
        idio_variances: &model.idio_variances,
        static_factors: rows(&model.static_factors),
        factor_lower: rows(&b.factor_lower),
        factor_upper: rows(&b.factor_upper),
        smoothed_factors: rows(&model.smoothed_factors),
        smoothed_variances: rows(&model.smoothed_variances),
        var_coefficients: model.var.coefficients.iter().map(rows).collect(),
        eta_cov: rows(&model.var.eta_cov),
        factor_cov: rows(model.factor_cov()),
        spectral_radius: model.var.spectral_radius,
        balanced_rows: model.balanced_rows.iter().map(|&s| start.offset(s as i64)).collect(),
        eigen: model.eigen.as_ref(),
    };
    dir.json("factor.json", &report)?;

    let mut head = vec!["date".to_string()];
    for j in 1..=model.r {
        for c in ["static", "lower", "upper", "smoothed", "smoothed_sd"] {
            head.push(format!("f{j}_{c}"));
        }
    }
    let body = (0..t)
        .map(|s| {
            let mut row = vec![start.offset(s as i64).to_string()];
            for j in 0..model.r {
                row.push(num(model.static_factors[(s, j)]));
                row.push(num(b.factor_lower[(s, j)]));
                row.push(num(b.factor_upper[(s, j)]));
                row.push(num(model.smoothed_factors[(s, j)]));
                row.push(num(model.smoothed_variances[(s, j)].sqrt()));
            }
            row
        })
        .collect();
    dir.csv("factor_series.csv", &head, body)?;

    let mut head = vec!["id".to_string()];
    for j in 1..=model.r {
        for c in ["loading", "lower", "upper", "smoothed"] {
            head.push(format!("p{j}_{c}"));
        }
    }
    let body = prep
        .final_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut row = vec![id.clone()];
            for j in 0..model.r {
                row.push(num(model.loadings[(i, j)]));
                row.push(num(b.loading_lower[(i, j)]));
                row.push(num(b.loading_upper[(i, j)]));
                row.push(num(model.smoothed_loadings[(i, j)]));
            }
            row
        })
        .collect();
    dir.csv("loadings.csv", &head, body)
}

/// `backtest.csv` (origin × model absolute errors) and `backtest_models.csv`.
pub fn write_backtest(dir: &mut RunDir, run: &NowcastRun) -> Result<(), ReportError> {
    let bt: &BacktestReport = &run.backtest;
    let y = &run.prepared.target;
    let first = y.start.offset((y.len() - bt.h_t()) as i64);
    let mut head = header(&["origin", "month", "actual"]);
    head.extend(bt.orders.iter().map(|&(p, q)| order_label(p, q)));
    let body = (0..bt.h_t())
        .map(|h| {
            let mut row = vec![(h + 1).to_string(), first.offset(h as i64).to_string(), num(bt.actuals[h])];
            row.extend(bt.abs_errors[h].iter().map(|&v| num(v)));
            row
        })
        .collect();
    dir.csv("backtest.csv", &head, body)?;

    let head = header(&["model", "p", "q", "wae", "mae", "coverage", "dm_pvalue", "survivor", "failed", "best"]);
    let body = bt
        .orders
        .iter()
        .enumerate()
        .map(|(m, &(p, q))| {
            vec![
                order_label(p, q),
                p.to_string(),
                q.to_string(),
                num(bt.wae[m]),
                num(if bt.failed[m] { f64::NAN } else { bt.mae(m) }),
                num(bt.coverage[m]),
                num(bt.dm_pvalues[m]),
                bt.survivors.contains(&m).to_string(),
                bt.failed[m].to_string(),
                (m == bt.best_index).to_string(),
            ]
        })
        .collect();
    dir.csv("backtest_models.csv", &head, body)?;

    let c = &run.combined_backtest;
    let head = header(&["origin", "month", "actual", "combined", "lower", "upper", "best", "benchmark"]);
    let bench = bt.index_of(0, 0);
    let body = (0..bt.h_t())
        .map(|h| {
            vec![
                (h + 1).to_string(),
                first.offset(h as i64).to_string(),
                num(bt.actuals[h]),
                num(c.points[h]),
                num(c.lower[h]),
                num(c.upper[h]),
                num(bt.forecasts[h][bt.best_index]),
                num(bench.map(|b| bt.forecasts[h][b]).unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    dir.csv("backtest_series.csv", &head, body)
}

pub fn write_comparators(dir: &mut RunDir, rows: &[ComparatorRow], first: Month) -> Result<(), ReportError> {
    let body = rows.iter().map(|r| vec![r.model.clone(), num(r.mae)]).collect();
    dir.csv("comparators.csv", &header(&["model", "mae"]), body)?;
    let h_t = rows.first().map(|r| r.cumulative_mae.len()).unwrap_or(0);
    let mut head = header(&["origin", "month"]);
    head.extend(rows.iter().map(|r| r.model.clone()));
    let body = (0..h_t)
        .map(|h| {
            let mut row = vec![(h + 1).to_string(), first.offset(h as i64).to_string()];
            row.extend(rows.iter().map(|r| num(r.cumulative_mae[h])));
            row
        })
        .collect();
    dir.csv("cumulative_mae.csv", &head, body)
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    model: String,
    survivor: bool,
    fit: Option<&'a ArmaRegModel>,
    nowcasts: Vec<Option<crate::trainer::ModelForecast>>,
}

#[derive(Serialize)]
struct NowcastEntry<'a> {
    month: Month,
    horizon: usize,
    #[serde(rename = "final")]
    final_blend: &'a NowcastResult,
    median_combination: &'a NowcastResult,
    benchmark: &'a NowcastResult,
}

#[derive(Serialize)]
struct BacktestSummary {
    h_t: usize,
    best: String,
    best_mae: f64,
    best_coverage: f64,
    combined_mae: f64,
    combined_median_ae: f64,
    combined_coverage: f64,
    benchmark_mae: f64,
    survivors: Vec<String>,
}

#[derive(Serialize)]
struct NowcastReport<'a> {
    target: &'a str,
    as_of: Option<chrono::NaiveDate>,
    last_observed: Month,
    nowcasts: Vec<NowcastEntry<'a>>,
    backtest: BacktestSummary,
    models: Vec<ModelSummary<'a>>,
}

/// `nowcast.json`, `diagnostics.json`, `nowcast.csv` and `fit_series.csv`.
pub fn write_nowcast(dir: &mut RunDir, run: &NowcastRun) -> Result<(), ReportError> {
    let bt = &run.backtest;
    let label = |m: usize| order_label(bt.orders[m].0, bt.orders[m].1);
    let months = run.open_months();
    let report = NowcastReport {
        target: &run.prepared.target.id,
        as_of: run.prepared.as_of,
        last_observed: run.prepared.target.end(),
        nowcasts: (0..2)
            .map(|h| NowcastEntry {
                month: months[h],
                horizon: h + 1,
                final_blend: &run.final_nowcasts[h],
                median_combination: &run.combined[h],
                benchmark: &run.benchmark[h],
            })
            .collect(),
        backtest: BacktestSummary {
            h_t: bt.h_t(),
            best: label(bt.best_index),
            best_mae: bt.mae(bt.best_index),
            best_coverage: bt.coverage[bt.best_index],
            combined_mae: run.combined_backtest.mae,
            combined_median_ae: run.combined_backtest.median_ae,
            combined_coverage: run.combined_backtest.coverage,
            benchmark_mae: run.mae_benchmark,
            survivors: bt.survivors.iter().map(|&m| label(m)).collect(),
        },
        models: (0..bt.orders.len())
            .map(|m| ModelSummary {
                model: label(m),
                survivor: bt.survivors.contains(&m),
                fit: run.fits[m].as_ref(),
                nowcasts: run.grid_nowcasts.iter().map(|h| h[m]).collect(),
            })
            .collect(),
    };
    dir.json("nowcast.json", &report)?;
    dir.json("diagnostics.json", &run.diagnostics)?;

    let head = header(&["month", "horizon", "method", "point", "ci_low", "ci_high"]);
    let mut body = Vec::new();
    for h in 0..2 {
        for nc in [&run.final_nowcasts[h], &run.combined[h], &run.benchmark[h]] {
            let method = if nc.components.len() == 1 && nc.components[0].label == order_label(0, 0) {
                "benchmark".to_string()
            } else {
                serde_json::to_value(nc.method)?.as_str().unwrap_or_default().to_string()
            };
            body.push(vec![
                months[h].to_string(),
                (h + 1).to_string(),
                method,
                num(nc.point),
                num(nc.ci_low),
                num(nc.ci_high),
            ]);
        }
    }
    dir.csv("nowcast.csv", &head, body)?;

    let y = &run.prepared.target;
    let f = factor_columns(&run.factor);
    let best = run.fits[bt.best_index].as_ref();
    let head = header(&["date", "actual", "fitted_best", "factor"]);
    let t = run.prepared.x.n_periods();
    let body = (0..t)
        .map(|s| {
            vec![
                y.start.offset(s as i64).to_string(),
                num(y.values.get(s).copied().unwrap_or(f64::NAN)),
                num(best.and_then(|m| m.fitted.get(s).copied()).unwrap_or(f64::NAN)),
                num(f[0][s]),
            ]
        })
        .collect();
    dir.csv("fit_series.csv", &head, body)
}

pub fn write_vintages(dir: &mut RunDir, rows: &[VintageRow]) -> Result<(), ReportError> {
    let head = header(&["as_of", "month", "horizon", "point", "ci_low", "ci_high", "availability"]);
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.as_of.to_string(),
                r.month.to_string(),
                r.horizon.to_string(),
                num(r.point),
                num(r.ci_low),
                num(r.ci_high),
                num(r.availability),
            ]
        })
        .collect();
    dir.csv("vintages.csv", &head, body)
}
