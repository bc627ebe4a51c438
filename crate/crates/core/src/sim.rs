//! Simulated data-generating processes with known structure.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Approximate factor model `x_it = p_i' f_t + e_it` with AR(1) factors.
#[derive(Debug, Clone, Copy)]
pub struct FactorDgp {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    pub phi: f64,
    /// Idiosyncratic variance relative to the common-component variance.
    pub noise_ratio: f64,
    /// Scale each series' noise by an independent U(0.5, 1.5) draw.
    pub heteroskedastic: bool,
}

impl Default for FactorDgp {
    fn default() -> Self {
        Self {
            n: 68,
            t: 200,
            r: 1,
            phi: 0.8,
            noise_ratio: 1.0,
            heteroskedastic: true,
        }
    }
}

pub struct FactorSample {
    /// Column-standardised panel, `T×N`.
    pub x: DMatrix<f64>,
    /// True factors, `T×r`.
    pub f: DMatrix<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn simulate_factor_panel(dgp: &FactorDgp, seed: u64) -> FactorSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let FactorDgp { n, t, r, phi, .. } = *dgp;
    let burn = 50;
    let mut f = DMatrix::zeros(t, r);
    for j in 0..r {
        let mut state = normal(&mut rng) / (1.0 - phi * phi).sqrt();
        for s in 0..burn + t {
            state = phi * state + normal(&mut rng);
            if s >= burn {
                f[(s - burn, j)] = state;
            }
        }
    }
    let loadings = DMatrix::from_fn(n, r, |_, _| normal(&mut rng));
    let factor_var = 1.0 / (1.0 - phi * phi);
    let mut x = DMatrix::zeros(t, n);
    for i in 0..n {
        let common_var = if r == 0 {
            1.0
        } else {
            loadings.row(i).norm_squared() * factor_var
        };
        let scale = if dgp.heteroskedastic {
            rng.random_range(0.5..1.5)
        } else {
            1.0
        };
        let sd = (common_var * dgp.noise_ratio * scale).sqrt();
        for s in 0..t {
            let common = if r == 0 {
                0.0
            } else {
                (0..r).map(|j| loadings[(i, j)] * f[(s, j)]).sum::<f64>()
            };
            x[(s, i)] = common + sd * normal(&mut rng);
        }
    }
    standardize_columns(&mut x);
    FactorSample { x, f }
}

/// Population-sd standardisation of every column.
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let t = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let m = col.sum() / t;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / t).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

/// Regression with ARMA(p, q) errors: `y_t = a + b x_t + u_t`.
#[derive(Debug, Clone)]
pub struct ArmaRegDgp {
    pub a: f64,
    pub b: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub t: usize,
}

/// Simulates the regression, returning `(y, x)` with `x` an AR(1) regressor.
pub fn simulate_arma_regression(dgp: &ArmaRegDgp, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = 200;
    let total = burn + dgp.t;
    let (p, q) = (dgp.phi.len(), dgp.theta.len());
    let mut xs = Vec::with_capacity(total);
    let mut xv = 0.0;
    let mut u = vec![0.0; total];
    let mut e = vec![0.0; total];
    for s in 0..total {
        xv = 0.7 * xv + normal(&mut rng);
        xs.push(xv);
        e[s] = dgp.sigma * normal(&mut rng);
        let mut v = e[s];
        for k in 1..=p {
            if s >= k {
                v += dgp.phi[k - 1] * u[s - k];
            }
        }
        for k in 1..=q {
            if s >= k {
                v += dgp.theta[k - 1] * e[s - k];
            }
        }
        u[s] = v;
    }
    let y = (burn..total).map(|s| dgp.a + dgp.b * xs[s] + u[s]).collect();
    (y, xs[burn..].to_vec())
}
