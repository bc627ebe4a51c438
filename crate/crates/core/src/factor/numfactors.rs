use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FactorError;
use crate::linalg;

pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Eigenvalues of `X'X/T`, descending.
    pub eigenvalues: Vec<f64>,
    pub r_hat: usize,
    pub delta: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Slope of `λ_j..λ_{j+4}` on `(j-1)^{2/3}..(j+3)^{2/3}` (1-based `j`).
fn edge_slope(eig: &[f64], j: usize) -> f64 {
    let xs: Vec<f64> = (0..5).map(|i| ((j + i - 1) as f64).powf(2.0 / 3.0)).collect();
    let ys: Vec<f64> = (0..5).map(|i| eig[j + i - 1]).collect();
    let mx = xs.iter().sum::<f64>() / 5.0;
    let my = ys.iter().sum::<f64>() / 5.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Edge-distribution estimate of the number of factors from the spectrum
/// of a complete panel.
pub fn estimate_num_factors(x: &DMatrix<f64>, r_max: usize) -> Result<EigenReport, FactorError> {
    let (t, n) = x.shape();
    if r_max + 5 > n {
        return Err(FactorError::RMaxTooLarge { r_max, n });
    }
    if t < 2 {
        return Err(FactorError::TooFewRows { rows: t, needed: 2 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FactorError::NonFinite);
    }
    let cov = x.transpose() * x / t as f64;
    let (vals, _) = linalg::symmetric_eigen_desc(&cov);
    let eig: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    Ok(edge_distribution(eig, r_max))
}

/// The fixed-point iteration on a given descending spectrum.
pub fn edge_distribution(eig: Vec<f64>, r_max: usize) -> EigenReport {
    let mut j = r_max + 1;
    let mut r_hat = 0;
    let mut delta = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        delta = 2.0 * edge_slope(&eig, j).abs();
        r_hat = (1..=r_max)
            .filter(|&k| eig[k - 1] - eig[k] >= delta)
            .max()
            .unwrap_or(0);
        if r_hat + 1 == j {
            converged = true;
            break;
        }
        j = r_hat + 1;
    }
    EigenReport {
        eigenvalues: eig,
        r_hat,
        delta,
        iterations,
        converged,
    }
}
