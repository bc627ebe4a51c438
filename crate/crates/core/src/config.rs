//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::armareg::ArmaOptions;
use crate::factor::FactorOptions;
use crate::panel::parse_date;
use crate::select::CvOptions;
use crate::trainer::{BacktestOptions, DmLoss};

/// Number of factors: a fixed count or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorCount {
    Fixed(usize),
    Named(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl FactorCount {
    pub const AUTO: FactorCount = FactorCount::Named(AutoTag::Auto);

    pub fn fixed(self) -> Option<usize> {
        match self {
            FactorCount::Fixed(r) => Some(r),
            FactorCount::Named(AutoTag::Auto) => None,
        }
    }
}

impl std::str::FromStr for FactorCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::AUTO);
        }
        s.parse().map(FactorCount::Fixed).map_err(|_| format!("expected an integer or \"auto\", got {s:?}"))
    }
}

/// Backtest origin weights: `"equal"` or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Named(EqualTag),
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualTag {
    Equal,
}

impl WeightsSpec {
    pub const EQUAL: WeightsSpec = WeightsSpec::Named(EqualTag::Equal);
}

impl std::str::FromStr for WeightsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("equal") {
            return Ok(Self::EQUAL);
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad weight {v:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(WeightsSpec::Custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub panel_path: Option<PathBuf>,
    pub target_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    /// Rolling lasso windows.
    pub h_g: usize,
    /// Backtest origins.
    pub h_t: usize,
    pub alpha_select: f64,
    pub alpha_dm: f64,
    pub p_max: usize,
    pub q_max: usize,
    pub r: FactorCount,
    pub r_max: usize,
    /// Lags of the factor VAR.
    pub k: usize,
    pub ci_level: f64,
    pub weights: WeightsSpec,
    pub seed: u64,
    /// Vintage cut `YYYY-MM-DD`; the data as given when absent.
    pub as_of: Option<String>,
    pub n_draws: usize,
    pub dm_loss: DmLoss,
    /// Random restarts per ARMA fit.
    pub restarts: usize,
    pub warm_start: bool,
    pub ljung_box_lags: usize,
    /// Cut dates for the vintage table.
    pub vintage_dates: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            panel_path: None,
            target_path: None,
            schema_path: None,
            h_g: 36,
            h_t: 36,
            alpha_select: 0.10,
            alpha_dm: 0.10,
            p_max: 4,
            q_max: 4,
            r: FactorCount::AUTO,
            r_max: 8,
            k: 1,
            ci_level: 0.95,
            weights: WeightsSpec::EQUAL,
            seed: 0,
            as_of: None,
            n_draws: 1000,
            dm_loss: DmLoss::Absolute,
            restarts: 5,
            warm_start: true,
            ljung_box_lags: 12,
            vintage_dates: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn as_of_date(&self) -> Result<Option<NaiveDate>, String> {
        self.as_of.as_deref().map(|s| parse_date(s).map_err(|e| e.to_string())).transpose()
    }

    pub fn vintage_cut_dates(&self) -> Result<Vec<NaiveDate>, String> {
        self.vintage_dates.iter().map(|s| parse_date(s).map_err(|e| e.to_string())).collect()
    }

    /// Checks ranges that the modules would otherwise reject deep inside a run.
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(format!("{name} must lie strictly between 0 and 1, got {v}"))
            }
        };
        unit("alpha_select", self.alpha_select)?;
        unit("alpha_dm", self.alpha_dm)?;
        unit("ci_level", self.ci_level)?;
        if self.h_t == 0 || self.h_g == 0 {
            return Err("h_t and h_g must be positive".into());
        }
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.n_draws == 0 {
            return Err("n_draws must be positive".into());
        }
        if self.r == FactorCount::Fixed(0) {
            return Err("r must be at least 1".into());
        }
        if let WeightsSpec::Custom(w) = &self.weights {
            if w.len() != self.h_t {
                return Err(format!("{} weights given for h_t = {}", w.len(), self.h_t));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(format!("weights must be nonnegative and sum to one (sum {sum})"));
            }
        }
        self.as_of_date()?;
        self.vintage_cut_dates()?;
        Ok(())
    }

    pub fn factor_options(&self) -> FactorOptions {
        FactorOptions {
            r: self.r.fixed(),
            r_max: self.r_max,
            var_lags: self.k,
            ci_level: self.ci_level,
            n_draws: self.n_draws,
            seed: self.seed,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions::default()
    }

    pub fn arma_options(&self, compute_se: bool) -> ArmaOptions {
        ArmaOptions {
            restarts: self.restarts,
            seed: self.seed,
            compute_se,
            ..ArmaOptions::default()
        }
    }

    pub fn backtest_options(&self) -> BacktestOptions {
        BacktestOptions {
            h_t: self.h_t,
            p_max: self.p_max,
            q_max: self.q_max,
            weights: match &self.weights {
                WeightsSpec::Named(_) => None,
                WeightsSpec::Custom(w) => Some(w.clone()),
            },
            level: self.ci_level,
            alpha_dm: self.alpha_dm,
            dm_loss: self.dm_loss,
            arma: self.arma_options(false),
            warm_start: self.warm_start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"r\":\"auto\""));
        assert!(json.contains("\"weights\":\"equal\""));
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"h_t": 24, "r": 2, "weights": [0.5, 0.5]}"#).unwrap();
        assert_eq!(cfg.h_t, 24);
        assert_eq!(cfg.r, FactorCount::Fixed(2));
        assert_eq!(cfg.weights, WeightsSpec::Custom(vec![0.5, 0.5]));
        assert_eq!(cfg.h_g, 36);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.alpha_dm = 0.0));
        assert!(bad(|c| c.weights = WeightsSpec::Custom(vec![1.0 / 36.0; 35])));
        assert!(bad(|c| c.weights = WeightsSpec::Custom(vec![0.03; 36])));
        assert!(bad(|c| c.as_of = Some("2020-13-01".into())));
        assert!(bad(|c| c.r = FactorCount::Fixed(0)));
        let mut ok = RunConfig::default();
        ok.weights = WeightsSpec::Custom(vec![1.0 / 36.0; 36]);
        ok.weights = match ok.weights {
            WeightsSpec::Custom(mut w) => {
                let s: f64 = w[..35].iter().sum();
                w[35] = 1.0 - s;
                WeightsSpec::Custom(w)
            }
            w => w,
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn parse_flags() {
        assert_eq!("auto".parse::<FactorCount>().unwrap(), FactorCount::AUTO);
        assert_eq!("3".parse::<FactorCount>().unwrap(), FactorCount::Fixed(3));
        assert_eq!("equal".parse::<WeightsSpec>().unwrap(), WeightsSpec::EQUAL);
        assert_eq!("0.25, 0.75".parse::<WeightsSpec>().unwrap(), WeightsSpec::Custom(vec![0.25, 0.75]));
    }
}
