use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DmLoss {
    #[default]
    Absolute,
    Squared,
}

impl DmLoss {
    fn apply(self, e: f64) -> f64 {
        match self {
            DmLoss::Absolute => e.abs(),
            DmLoss::Squared => e * e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmTest {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

/// Bartlett truncation lag `floor(H^{1/3})`.
pub fn bartlett_lag(h: usize) -> usize {
    let mut l = (h as f64).cbrt().floor() as usize;
    // Guard against rounding just below an integer cube root.
    while (l + 1).pow(3) <= h {
        l += 1;
    }
    l
}

/// Bartlett-kernel long-run variance of `d`.
pub fn bartlett_lrv(d: &[f64], lags: usize) -> f64 {
    let h = d.len() as f64;
    let mean = stats::mean(d);
    let acov = |k: usize| d[k..].iter().zip(d).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / h;
    let mut lrv = acov(0);
    for k in 1..=lags.min(d.len() - 1) {
        lrv += 2.0 * (1.0 - k as f64 / (lags as f64 + 1.0)) * acov(k);
    }
    lrv
}

/// Diebold–Mariano test of equal accuracy on `d_t = L(e_a,t) − L(e_b,t)`.
/// A positive statistic means `e_a` has the larger loss.
pub fn diebold_mariano(e_a: &[f64], e_b: &[f64], loss: DmLoss) -> Result<DmTest, TrainerError> {
    if e_a.len() != e_b.len() {
        return Err(TrainerError::Shape(format!("error vectors of length {} and {}", e_a.len(), e_b.len())));
    }
    let h = e_a.len();
    if h < 8 {
        return Err(TrainerError::TooFewOrigins { h, needed: 8 });
    }
    if e_a.iter().chain(e_b).any(|v| !v.is_finite()) {
        return Err(TrainerError::NonFinite);
    }
    let d: Vec<f64> = e_a.iter().zip(e_b).map(|(a, b)| loss.apply(*a) - loss.apply(*b)).collect();
    let lags = bartlett_lag(h);
    if d.iter().all(|v| *v == 0.0) {
        return Ok(DmTest {
            statistic: 0.0,
            p_value: 1.0,
            lags,
        });
    }
    let mean = stats::mean(&d);
    let lrv = bartlett_lrv(&d, lags);
    let statistic = if lrv > 0.0 {
        mean / (lrv / h as f64).sqrt()
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let p_value = (2.0 * (1.0 - stats::normal_cdf(statistic.abs()))).clamp(0.0, 1.0);
    Ok(DmTest {
        statistic,
        p_value,
        lags,
    })
}
