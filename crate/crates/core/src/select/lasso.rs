use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SelectError;

/// Coordinate-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// Bound on the largest coefficient change over a full sweep.
    pub tol: f64,
    /// Bound on the KKT residual accepted at convergence.
    pub kkt_tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-7,
            kkt_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn active(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centred copy of a regression problem, reused across a lambda path.
pub(crate) struct Problem {
    w: DMatrix<f64>,
    y: DVector<f64>,
    w_means: Vec<f64>,
    y_mean: f64,
    /// `w_j'w_j / T` for each centred column.
    norms: Vec<f64>,
}

impl Problem {
    pub(crate) fn new(y: &[f64], w: &DMatrix<f64>) -> Result<Self, SelectError> {
        let (t, k) = w.shape();
        if k == 0 {
            return Err(SelectError::NoCandidates);
        }
        if t != y.len() {
            return Err(SelectError::Shape(format!(
                "design has {t} rows but the response has {}",
                y.len()
            )));
        }
        if t == 0 {
            return Err(SelectError::Shape("empty sample".into()));
        }
        if y.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(SelectError::NonFinite);
        }
        let tf = t as f64;
        let y_mean = y.iter().sum::<f64>() / tf;
        let yc = DVector::from_iterator(t, y.iter().map(|v| v - y_mean));
        let mut wc = w.clone();
        let mut w_means = Vec::with_capacity(k);
        let mut norms = Vec::with_capacity(k);
        for j in 0..k {
            let m = wc.column(j).sum() / tf;
            wc.column_mut(j).add_scalar_mut(-m);
            w_means.push(m);
            norms.push(wc.column(j).norm_squared() / tf);
        }
        Ok(Self {
            w: wc,
            y: yc,
            w_means,
            y_mean,
            norms,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Smallest lambda at which every coefficient is zero.
    pub(crate) fn lambda_max(&self) -> f64 {
        let t = self.n() as f64;
        (0..self.k())
            .map(|j| self.w.column(j).dot(&self.y).abs() / t)
            .fold(0.0, f64::max)
    }

    fn gradient(&self, r: &DVector<f64>, j: usize) -> f64 {
        self.w.column(j).dot(r) / self.n() as f64
    }

    pub(crate) fn kkt_residual(&self, beta: &[f64], lambda: f64) -> f64 {
        let r = self.residual(beta);
        (0..self.k())
            .map(|j| {
                let g = self.gradient(&r, j);
                if beta[j] == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g - lambda * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn residual(&self, beta: &[f64]) -> DVector<f64> {
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                r.axpy(-b, &self.w.column(j), 1.0);
            }
        }
        r
    }

    #[cfg(test)]
    pub(crate) fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let r = self.residual(beta);
        r.norm_squared() / (2.0 * self.n() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// One cyclic pass over `coords`, updating `beta` and the residual in
    /// place. Returns the largest scaled coefficient change.
    fn sweep(&self, beta: &mut [f64], r: &mut DVector<f64>, lambda: f64, coords: &[usize]) -> f64 {
        let mut max_delta: f64 = 0.0;
        for &j in coords {
            let c = self.norms[j];
            if c <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let z = self.gradient(r, j) + c * old;
            let new = soft_threshold(z, lambda) / c;
            if new != old {
                r.axpy(old - new, &self.w.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max((new - old).abs() * c.sqrt());
            }
        }
        max_delta
    }

    /// Coordinate descent from `beta`, alternating full sweeps with passes
    /// restricted to the active set.
    pub(crate) fn solve(&self, lambda: f64, beta: &mut [f64], opts: &LassoOptions) -> LassoFit {
        let k = self.k();
        let all: Vec<usize> = (0..k).collect();
        let mut r = self.residual(beta);
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < opts.max_sweeps {
            let delta = self.sweep(beta, &mut r, lambda, &all);
            sweeps += 1;
            if delta < opts.tol {
                // Guard against drift in the running residual.
                r = self.residual(beta);
                if self.kkt_residual(beta, lambda) <= opts.kkt_tol {
                    converged = true;
                    break;
                }
                continue;
            }
            let active: Vec<usize> = all.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            while sweeps < opts.max_sweeps {
                let d = self.sweep(beta, &mut r, lambda, &active);
                sweeps += 1;
                if d < opts.tol {
                    break;
                }
            }
        }
        let intercept = self.y_mean
            - beta
                .iter()
                .zip(&self.w_means)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        LassoFit {
            lambda,
            coefficients: beta.to_vec(),
            intercept,
            kkt_residual: self.kkt_residual(beta, lambda),
            sweeps,
            converged,
        }
    }
}

/// Minimises `(1/(2T))·RSS + lambda·Σ|β_j|` over slopes, with an
/// unpenalised intercept absorbed by centring.
pub fn lasso_fit(y: &[f64], w: &DMatrix<f64>, lambda: f64) -> Result<LassoFit, SelectError> {
    lasso_fit_with(y, w, lambda, &LassoOptions::default())
}

pub fn lasso_fit_with(
    y: &[f64],
    w: &DMatrix<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoFit, SelectError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SelectError::Lambda(lambda));
    }
    let p = Problem::new(y, w)?;
    let mut beta = vec![0.0; p.k()];
    Ok(p.solve(lambda, &mut beta, opts))
}
