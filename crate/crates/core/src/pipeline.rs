//! End-to-end composition: vintage cut, transformation, topic screen,
//! factor extraction, grid backtest, live nowcast and diagnostics.

use std::collections::HashMap;

use chrono::NaiveDate;
use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::armareg::{fit_armareg, ljung_box, ArmaError, ArmaRegModel, LjungBox};
use crate::config::RunConfig;
use crate::diag::{adf_test, pooled_idio_test, AdfSpec, DiagError, PooledResult, UnitRootResult};
use crate::factor::{two_step, EigenReport, FactorError, FactorModel};
use crate::fixture::Fixture;
use crate::panel::{
    apply_vintage, availability_ratio, load_panel, load_schema, load_target, Month, PanelError, TargetMeta,
    TargetSeries, TimeSeriesPanel,
};
use crate::select::{rolling_select, SelectError, SelectionResult};
use crate::trainer::{
    backtest_grid, combine_median, final_blend, naive_factor, ols_backtest, order_label, single, BacktestReport,
    CombinedBacktest, ModelForecast, NowcastResult, TrainerError,
};
use crate::transform::{transform_panel, transform_with_codes, TransformCode, TransformError, TransformedPanel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Arma(#[from] ArmaError),
    #[error(transparent)]
    Diag(#[from] DiagError),
}

impl PipelineError {
    /// 2 for bad inputs or configuration, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Panel(_) => 2,
            PipelineError::Transform(e) => match e {
                TransformError::Panel(_) | TransformError::CodeCount { .. } => 2,
                _ => 1,
            },
            PipelineError::Select(e) => match e {
                SelectError::Alpha(_) | SelectError::WindowTooLarge { .. } | SelectError::NoCandidates => 2,
                _ => 1,
            },
            PipelineError::Trainer(e) => match e {
                TrainerError::Weights | TrainerError::HorizonTooLong { .. } | TrainerError::Shape(_) => 2,
                _ => 1,
            },
            PipelineError::Factor(FactorError::Level(_)) => 2,
            _ => 1,
        }
    }
}

/// Raw inputs of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub panel: TimeSeriesPanel,
    pub target: TargetSeries,
    pub target_meta: TargetMeta,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let need = |p: &Option<std::path::PathBuf>, what: &str| {
            p.clone().ok_or_else(|| PipelineError::Config(format!("{what} path is required")))
        };
        let schema = load_schema(&need(&cfg.schema_path, "schema")?)?;
        schema.validate()?;
        let panel = load_panel(&need(&cfg.panel_path, "panel")?, &schema)?;
        let target = load_target(&need(&cfg.target_path, "target")?)?;
        let target_meta = schema.target.clone().unwrap_or_else(|| TargetMeta {
            id: target.id.clone(),
            ..TargetMeta::default()
        });
        Ok(Self {
            panel,
            target,
            target_meta,
        })
    }

    pub fn from_fixture(fx: &Fixture) -> Self {
        Self {
            panel: fx.panel.clone(),
            target: fx.target.clone(),
            target_meta: fx.schema.target.clone().unwrap_or_default(),
        }
    }

    /// The same inputs without the nontraditional block.
    pub fn traditional_only(&self) -> Result<Self, PipelineError> {
        let idx: Vec<usize> = self
            .panel
            .meta()
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.block.is_nontraditional())
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            panel: self.panel.select_columns(&idx)?,
            target: self.target.clone(),
            target_meta: self.target_meta.clone(),
        })
    }

    pub fn has_nontraditional(&self) -> bool {
        self.panel.meta().iter().any(|m| m.block.is_nontraditional())
    }

    /// Target and panel as published by `as_of`, the panel clipped to the
    /// target's range plus the two open months.
    pub fn vintage(&self, as_of: Option<NaiveDate>) -> Result<(TargetSeries, TimeSeriesPanel), PipelineError> {
        let (target, panel) = match as_of {
            Some(d) => (self.target.vintage(&self.target_meta, d)?, apply_vintage(&self.panel, d)?),
            None => (self.target.clone(), self.panel.clone()),
        };
        if target.start < panel.start() {
            return Err(PanelError::Alignment(format!(
                "target starts {} before the panel ({})",
                target.start,
                panel.start()
            ))
            .into());
        }
        let panel = panel.with_range(target.start, target.end().offset(2))?;
        Ok((target, panel))
    }
}

/// Transformation codes and topic selection carried unchanged into
/// vintage reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenChoices {
    pub codes: Vec<(String, TransformCode)>,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub as_of: Option<NaiveDate>,
    pub target: TargetSeries,
    /// Raw panel after the vintage cut, aligned with the target.
    pub raw: TimeSeriesPanel,
    /// Every series, transformed and standardised.
    pub transformed: TransformedPanel,
    pub selection: Option<SelectionResult>,
    /// Series entering the factor model, in panel order.
    pub final_ids: Vec<String>,
    /// The standardised factor-model panel `X*`.
    pub x: TimeSeriesPanel,
}

impl Prepared {
    pub fn frozen(&self) -> FrozenChoices {
        FrozenChoices {
            codes: self
                .transformed
                .panel
                .ids()
                .iter()
                .zip(&self.transformed.codes)
                .map(|(id, c)| (id.to_string(), *c))
                .collect(),
            selected: self.selection.as_ref().map(|s| s.selected_ids.clone()).unwrap_or_default(),
        }
    }
}

/// Vintage cut, transformation choice and topic screen.
pub fn prepare(inputs: &Inputs, cfg: &RunConfig, frozen: Option<&FrozenChoices>) -> Result<Prepared, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let as_of = cfg.as_of_date().map_err(PipelineError::Config)?;
    let (target, raw) = inputs.vintage(as_of)?;
    let transformed = match frozen {
        None => transform_panel(&raw, &target)?,
        Some(fz) => {
            let table: HashMap<&str, TransformCode> = fz.codes.iter().map(|(id, c)| (id.as_str(), *c)).collect();
            let codes = raw
                .ids()
                .iter()
                .map(|id| {
                    table
                        .get(id)
                        .copied()
                        .ok_or_else(|| PipelineError::Config(format!("no frozen transformation for {id:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            transform_with_codes(&raw, &codes)?
        }
    };
    for (id, w) in &transformed.warnings {
        warn!("{id}: {w:?}");
    }
    let meta = transformed.panel.meta();
    let candidates: Vec<&str> =
        meta.iter().filter(|m| m.is_lasso_candidate()).map(|m| m.id.as_str()).collect();
    let (selection, selected): (Option<SelectionResult>, Vec<String>) = match frozen {
        Some(fz) => (None, fz.selected.clone()),
        None if candidates.is_empty() => (None, Vec::new()),
        None => {
            let cand = transformed.panel.select_ids(&candidates)?;
            let sel = rolling_select(&target, &cand, cfg.h_g, cfg.alpha_select, &cfg.cv_options())?;
            let ids = sel.selected_ids.clone();
            (Some(sel), ids)
        }
    };
    let final_ids: Vec<String> = meta
        .iter()
        .filter(|m| !m.is_lasso_candidate() || selected.contains(&m.id))
        .map(|m| m.id.clone())
        .collect();
    if final_ids.is_empty() {
        return Err(PipelineError::Config("no series left for the factor model".into()));
    }
    let id_refs: Vec<&str> = final_ids.iter().map(String::as_str).collect();
    let x = transformed.panel.select_ids(&id_refs)?;
    info!(
        "{} of {} series enter the factor model ({} topics selected)",
        final_ids.len(),
        meta.len(),
        selected.len()
    );
    Ok(Prepared {
        as_of,
        target,
        raw,
        transformed,
        selection,
        final_ids,
        x,
    })
}

/// `F̃` as regressor columns.
pub fn factor_columns(model: &FactorModel) -> Vec<Vec<f64>> {
    model.smoothed_factors.column_iter().map(|c| c.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r: usize,
    pub eigen: Option<EigenReport>,
    /// ADF on each smoothed factor.
    pub factor_adf: Vec<UnitRootResult>,
    /// Pooled ADF on the balanced-row residuals `X − F̂P̂'`.
    pub idio_pooled: Option<PooledResult>,
    pub best_order: (usize, usize),
    pub ljung_box: Option<LjungBox>,
    pub var_spectral_radius: f64,
    pub mc_objective: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct NowcastRun {
    pub prepared: Prepared,
    pub factor: FactorModel,
    pub backtest: BacktestReport,
    pub combined_backtest: CombinedBacktest,
    /// Full-sample fit of each grid model, `None` where it failed.
    pub fits: Vec<Option<ArmaRegModel>>,
    /// `grid_nowcasts[h][m]`, horizons 1 and 2.
    pub grid_nowcasts: Vec<Vec<Option<ModelForecast>>>,
    pub combined: Vec<NowcastResult>,
    pub benchmark: Vec<NowcastResult>,
    pub final_nowcasts: Vec<NowcastResult>,
    pub mae_benchmark: f64,
    pub diagnostics: Diagnostics,
}

impl NowcastRun {
    /// Months covered by the live nowcasts.
    pub fn open_months(&self) -> [Month; 2] {
        let end = self.prepared.target.end();
        [end.offset(1), end.offset(2)]
    }
}

fn balanced_residuals(x: &TimeSeriesPanel, model: &FactorModel) -> DMatrix<f64> {
    let rows = &model.balanced_rows;
    let (n, r) = (x.n_series(), model.r);
    DMatrix::from_fn(rows.len(), n, |k, i| {
        let s = rows[k];
        let common: f64 = (0..r).map(|j| model.static_factors[(s, j)] * model.loadings[(i, j)]).sum();
        x.values()[(s, i)] - common
    })
}

fn diagnostics(prep: &Prepared, model: &FactorModel, best: Option<&ArmaRegModel>, cfg: &RunConfig) -> Diagnostics {
    let mut warnings = Vec::new();
    let factor_adf = factor_columns(model)
        .iter()
        .enumerate()
        .filter_map(|(j, f)| match adf_test(f, None, AdfSpec::Constant) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("ADF on factor {}: {e}", j + 1));
                None
            }
        })
        .collect();
    let idio_pooled = match pooled_idio_test(&balanced_residuals(&prep.x, model), AdfSpec::Constant) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("pooled idiosyncratic test: {e}"));
            None
        }
    };
    let ljung_box = best.and_then(|m| {
        let lags = cfg.ljung_box_lags.min(m.innovations.len().saturating_sub(1) / 2);
        match ljung_box(&m.innovations, lags, m.p + m.q) {
            Ok(lb) => Some(lb),
            Err(e) => {
                warnings.push(format!("Ljung-Box: {e}"));
                None
            }
        }
    });
    for w in &warnings {
        warn!("{w}");
    }
    Diagnostics {
        r: model.r,
        eigen: model.eigen.clone(),
        factor_adf,
        idio_pooled,
        best_order: best.map(|m| (m.p, m.q)).unwrap_or((0, 0)),
        ljung_box,
        var_spectral_radius: model.var.spectral_radius,
        mc_objective: model.mc_objective,
        warnings,
    }
}

fn live_forecasts(
    fit: &Result<ArmaRegModel, ArmaError>,
    f: &[Vec<f64>],
    n: usize,
    level: f64,
) -> Vec<Option<ModelForecast>> {
    let future: Vec<Vec<f64>> = (n..n + 2).map(|t| f.iter().map(|c| c[t]).collect()).collect();
    match fit.as_ref().map(|m| m.forecast(&future, level)) {
        Ok(Ok(points)) => points
            .iter()
            .map(|p| {
                Some(ModelForecast {
                    point: p.point,
                    lower: p.lower,
                    upper: p.upper,
                })
            })
            .collect(),
        _ => vec![None, None],
    }
}

/// Factor extraction on a prepared panel.
pub fn fit_factor(prep: &Prepared, cfg: &RunConfig) -> Result<FactorModel, PipelineError> {
    let model = two_step(&prep.x, &cfg.factor_options())?;
    if let Some(e) = &model.eigen {
        info!("edge-distribution estimate r = {} (using {})", e.r_hat, model.r);
    }
    Ok(model)
}

/// The whole pipeline at one vintage.
pub fn run_nowcast(inputs: &Inputs, cfg: &RunConfig, frozen: Option<&FrozenChoices>) -> Result<NowcastRun, PipelineError> {
    let prepared = prepare(inputs, cfg, frozen)?;
    let factor = fit_factor(&prepared, cfg)?;
    let f = factor_columns(&factor);
    let y = &prepared.target.values;
    let n = y.len();
    let bt_opts = cfg.backtest_options();
    let backtest = backtest_grid(y, &f, &bt_opts)?;
    let combined_backtest = backtest.combined();

    let train: Vec<Vec<f64>> = f.iter().map(|c| c[..n].to_vec()).collect();
    let full_opts = cfg.arma_options(true);
    let raw_fits: Vec<Result<ArmaRegModel, ArmaError>> = backtest
        .orders
        .par_iter()
        .map(|&(p, q)| fit_armareg(y, &train, p, q, &full_opts))
        .collect();
    let per_model: Vec<Vec<Option<ModelForecast>>> =
        raw_fits.iter().map(|fit| live_forecasts(fit, &f, n, cfg.ci_level)).collect();
    for (fit, &(p, q)) in raw_fits.iter().zip(&backtest.orders) {
        if let Err(e) = fit {
            warn!("full-sample arma({p},{q}) failed: {e}");
        }
    }
    let grid_nowcasts: Vec<Vec<Option<ModelForecast>>> =
        (0..2).map(|h| per_model.iter().map(|m| m[h]).collect()).collect();
    let combined = combine_median(&backtest, &grid_nowcasts)?;

    let bench = backtest.index_of(0, 0).ok_or_else(|| PipelineError::Config("grid lacks (0,0)".into()))?;
    let benchmark: Vec<NowcastResult> = (0..2)
        .map(|h| {
            grid_nowcasts[h][bench]
                .map(|fc| single(order_label(0, 0), h + 1, fc))
                .ok_or(PipelineError::Trainer(TrainerError::NoSurvivors))
        })
        .collect::<Result<_, _>>()?;
    let mae_benchmark = backtest.mae(bench);
    let final_nowcasts = combined
        .iter()
        .zip(&benchmark)
        .map(|(c, b)| final_blend(c, b, combined_backtest.mae, mae_benchmark))
        .collect::<Result<Vec<_>, _>>()?;

    let fits: Vec<Option<ArmaRegModel>> = raw_fits.into_iter().map(Result::ok).collect();
    let diagnostics = diagnostics(&prepared, &factor, fits[backtest.best_index].as_ref(), cfg);
    Ok(NowcastRun {
        prepared,
        factor,
        backtest,
        combined_backtest,
        fits,
        grid_nowcasts,
        combined,
        benchmark,
        final_nowcasts,
        mae_benchmark,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorRow {
    pub model: String,
    pub mae: f64,
    /// Running MAE over the first `h` origins.
    pub cumulative_mae: Vec<f64>,
}

fn comparator_row(model: &str, errors: &[f64]) -> ComparatorRow {
    let mut acc = 0.0;
    let cumulative_mae: Vec<f64> = errors
        .iter()
        .enumerate()
        .map(|(h, e)| {
            acc += e.abs();
            acc / (h + 1) as f64
        })
        .collect();
    ComparatorRow {
        model: model.into(),
        mae: *cumulative_mae.last().unwrap_or(&f64::NAN),
        cumulative_mae,
    }
}

/// Backtest MAEs of the full model against the equal-weight naive factor
/// and the pipeline without nontraditional series.
pub fn run_comparators(inputs: &Inputs, cfg: &RunConfig, main: &NowcastRun) -> Result<Vec<ComparatorRow>, PipelineError> {
    let bt = &main.backtest;
    let y = &main.prepared.target.values;
    let mut rows = vec![
        comparator_row("full", &bt.model_errors(bt.best_index)),
        comparator_row("full_combined", &main.combined_backtest.errors),
    ];
    let x = &main.prepared.x;
    let naive = naive_factor(x.values(), x.mask());
    let ols = ols_backtest(y, &[naive], cfg.h_t, cfg.ci_level)?;
    rows.push(comparator_row("naive", &ols.errors));
    let traditional = if inputs.has_nontraditional() {
        let trad = run_nowcast(&inputs.traditional_only()?, cfg, None)?;
        trad.backtest.model_errors(trad.backtest.best_index)
    } else {
        bt.model_errors(bt.best_index)
    };
    rows.push(comparator_row("traditional", &traditional));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VintageRow {
    pub as_of: NaiveDate,
    pub month: Month,
    pub horizon: usize,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Share of factor-model series observed in `month` at this vintage.
    pub availability: f64,
}

/// Final nowcasts of the two open months at each cut date, keeping the
/// transformation codes and topic selection of `frozen`.
pub fn vintage_study(
    inputs: &Inputs,
    cfg: &RunConfig,
    cut_dates: &[NaiveDate],
    frozen: &FrozenChoices,
) -> Result<Vec<VintageRow>, PipelineError> {
    let mut rows = Vec::with_capacity(2 * cut_dates.len());
    for &d in cut_dates {
        info!("vintage {d}");
        let run_cfg = RunConfig {
            as_of: Some(d.to_string()),
            ..cfg.clone()
        };
        let run = run_nowcast(inputs, &run_cfg, Some(frozen))?;
        let ids: Vec<&str> = run.prepared.final_ids.iter().map(String::as_str).collect();
        let model_panel = run.prepared.raw.select_ids(&ids)?;
        for (nc, month) in run.final_nowcasts.iter().zip(run.open_months()) {
            rows.push(VintageRow {
                as_of: d,
                month,
                horizon: nc.horizon,
                point: nc.point,
                ci_low: nc.ci_low,
                ci_high: nc.ci_high,
                availability: availability_ratio(&model_panel, month)?,
            });
        }
    }
    Ok(rows)
}
