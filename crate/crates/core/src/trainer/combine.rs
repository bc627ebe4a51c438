use serde::{Deserialize, Serialize};

use super::{BacktestReport, TrainerError};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMethod {
    MedianCombination,
    FinalBlend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub point: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NowcastResult {
    pub horizon: usize,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub components: Vec<Component>,
    pub method: CombineMethod,
}

/// A single model's forecast at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelForecast {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn order_label(p: usize, q: usize) -> String {
    format!("arma({p},{q})")
}

/// Median of survivors' points with the medians of their bounds as the
/// interval. `forecasts[m]` is `None` for models without a forecast.
pub fn median_of(
    report: &BacktestReport,
    forecasts: &[Option<ModelForecast>],
    horizon: usize,
) -> Result<NowcastResult, TrainerError> {
    let members: Vec<(usize, ModelForecast)> = report
        .survivors
        .iter()
        .filter_map(|&m| forecasts.get(m).copied().flatten().map(|f| (m, f)))
        .collect();
    if members.is_empty() {
        return Err(TrainerError::NoSurvivors);
    }
    let points: Vec<f64> = members.iter().map(|(_, f)| f.point).collect();
    let lows: Vec<f64> = members.iter().map(|(_, f)| f.lower).collect();
    let highs: Vec<f64> = members.iter().map(|(_, f)| f.upper).collect();
    // Order statistics are monotone, so lower ≤ point ≤ upper member-wise
    // carries over to the medians.
    let point = stats::median(&points);
    let ci_low = stats::median(&lows);
    let ci_high = stats::median(&highs);
    let w = 1.0 / members.len() as f64;
    Ok(NowcastResult {
        horizon,
        point,
        ci_low,
        ci_high,
        components: members
            .iter()
            .map(|(m, f)| {
                let (p, q) = report.orders[*m];
                Component {
                    label: order_label(p, q),
                    point: f.point,
                    weight: w,
                }
            })
            .collect(),
        method: CombineMethod::MedianCombination,
    })
}

/// Median combination of the grid nowcasts: `grid_nowcasts[h][m]` holds
/// model `m`'s forecast at horizon `h + 1`.
pub fn combine_median(
    report: &BacktestReport,
    grid_nowcasts: &[Vec<Option<ModelForecast>>],
) -> Result<Vec<NowcastResult>, TrainerError> {
    grid_nowcasts
        .iter()
        .enumerate()
        .map(|(h, row)| median_of(report, row, h + 1))
        .collect()
}

/// Inverse-MAE weights `(w_combined, w_benchmark)`.
pub fn blend_weights(mae_combined: f64, mae_benchmark: f64) -> Result<(f64, f64), TrainerError> {
    if !(mae_combined > 0.0) || !(mae_benchmark > 0.0) {
        return Err(TrainerError::NonPositiveMae(mae_combined.min(mae_benchmark)));
    }
    if mae_benchmark.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let (a, b) = (1.0 / mae_combined, 1.0 / mae_benchmark);
    Ok((a / (a + b), b / (a + b)))
}

pub fn final_blend(
    combined: &NowcastResult,
    benchmark: &NowcastResult,
    mae_combined: f64,
    mae_benchmark: f64,
) -> Result<NowcastResult, TrainerError> {
    let (wc, wb) = blend_weights(mae_combined, mae_benchmark)?;
    let mix = |a: f64, b: f64| if wb == 0.0 { a } else { wc * a + wb * b };
    Ok(NowcastResult {
        horizon: combined.horizon,
        point: mix(combined.point, benchmark.point),
        ci_low: mix(combined.ci_low, benchmark.ci_low),
        ci_high: mix(combined.ci_high, benchmark.ci_high),
        components: vec![
            Component {
                label: "median_combination".into(),
                point: combined.point,
                weight: wc,
            },
            Component {
                label: order_label(0, 0),
                point: benchmark.point,
                weight: wb,
            },
        ],
        method: CombineMethod::FinalBlend,
    })
}

/// Wraps one model's forecast as a single-component result.
pub fn single(label: String, horizon: usize, f: ModelForecast) -> NowcastResult {
    NowcastResult {
        horizon,
        point: f.point,
        ci_low: f.lower,
        ci_high: f.upper,
        components: vec![Component {
            label,
            point: f.point,
            weight: 1.0,
        }],
        method: CombineMethod::MedianCombination,
    }
}
