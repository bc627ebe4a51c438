use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::optimize::{bfgs, BfgsResult};
use super::params::{ar_from_free, free_from_ar, free_from_ma, ma_from_free, max_abs_pacf, reflect_ma};
use super::statespace::{filter_columns, ArmaSystem};
use super::{ArmaError, ArmaOptions, ArmaRegModel};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters concentrated out of the likelihood for fixed `(φ, γ)`.
struct Profile {
    beta: Vec<f64>,
    sigma2: f64,
    loglik: f64,
}

/// Columns `[y, 1, x_1, ..., x_r]`.
fn stacked<'a>(y: &'a [f64], ones: &'a [f64], x: &'a [Vec<f64>]) -> Vec<&'a [f64]> {
    let mut cols: Vec<&[f64]> = vec![y, ones];
    cols.extend(x.iter().map(|c| c.as_slice()));
    cols
}

fn gaussian_loglik(n: usize, sigma2: f64, sum_log_f: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (LN_2PI + sigma2.ln() + 1.0) - 0.5 * sum_log_f
}

/// GLS for `β` and `σ²` with the ARMA parameters held fixed.
fn profile(sys: &ArmaSystem, cols: &[&[f64]]) -> Option<Profile> {
    let out = filter_columns(sys, cols);
    let n = out.f.len();
    let k = cols.len() - 1;
    let mut w = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for t in 0..n {
        let inv = 1.0 / out.f[t];
        for i in 0..k {
            let ei = out.innovations[i + 1][t] * inv;
            rhs[i] += ei * out.innovations[0][t];
            for j in 0..=i {
                w[(i, j)] += ei * out.innovations[j + 1][t];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            w[(j, i)] = w[(i, j)];
        }
    }
    let beta = w.cholesky()?.solve(&rhs);
    let mut rss = 0.0;
    let mut sum_log_f = 0.0;
    for t in 0..n {
        let mut e = out.innovations[0][t];
        for i in 0..k {
            e -= beta[i] * out.innovations[i + 1][t];
        }
        rss += e * e / out.f[t];
        sum_log_f += out.f[t].ln();
    }
    let sigma2 = rss / n as f64;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return None;
    }
    Some(Profile {
        beta: beta.iter().copied().collect(),
        sigma2,
        loglik: gaussian_loglik(n, sigma2, sum_log_f),
    })
}

fn split_free(theta: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    (ar_from_free(&theta[..p]), ma_from_free(&theta[p..]))
}

fn profile_free(theta: &[f64], p: usize, cols: &[&[f64]]) -> Option<Profile> {
    let (phi, gamma) = split_free(theta, p);
    let sys = ArmaSystem::new(&phi, &gamma)?;
    profile(&sys, cols)
}

/// Exact loglik at natural parameters `(a, b, φ, γ)` with `σ²` profiled.
fn loglik_natural(psi: &[f64], p: usize, q: usize, y: &[f64], x: &[Vec<f64>]) -> f64 {
    let r = x.len();
    let (a, b) = (psi[0], &psi[1..1 + r]);
    let phi = &psi[1 + r..1 + r + p];
    let gamma = &psi[1 + r + p..1 + r + p + q];
    let ar_poly: Vec<f64> = phi.iter().map(|c| -c).collect();
    if super::params::min_root_modulus(&ar_poly) <= 1.0 {
        return f64::NAN;
    }
    let Some(sys) = ArmaSystem::new(phi, gamma) else {
        return f64::NAN;
    };
    let u = regression_errors(y, x, a, b);
    let out = filter_columns(&sys, &[&u]);
    let n = y.len();
    let rss: f64 = out.innovations[0].iter().zip(&out.f).map(|(v, f)| v * v / f).sum();
    let sum_log_f: f64 = out.f.iter().map(|f| f.ln()).sum();
    gaussian_loglik(n, rss / n as f64, sum_log_f)
}

pub(super) fn regression_errors(y: &[f64], x: &[Vec<f64>], a: f64, b: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|t| y[t] - a - b.iter().zip(x).map(|(bi, xi)| bi * xi[t]).sum::<f64>())
        .collect()
}

fn ols(y: &[f64], x: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = y.len();
    let design = DMatrix::from_fn(n, x.len() + 1, |t, j| if j == 0 { 1.0 } else { x[j - 1][t] });
    linalg::least_squares(&design, &DVector::from_column_slice(y)).map(|b| b.iter().copied().collect())
}

/// Hannan–Rissanen starting values in the free parametrisation.
fn hannan_rissanen(u: &[f64], p: usize, q: usize) -> Option<Vec<f64>> {
    let n = u.len();
    let mut phi = vec![0.0; p];
    let mut gamma = vec![0.0; q];
    let mut eps = vec![0.0; n];
    let long = (p.max(q) + 4).min(n / 4);
    if q > 0 && long > 0 {
        let rows = n - long;
        let design = DMatrix::from_fn(rows, long, |i, j| u[i + long - 1 - j]);
        let target = DVector::from_fn(rows, |i, _| u[i + long]);
        let coef = linalg::least_squares(&design, &target)?;
        for t in long..n {
            eps[t] = u[t] - (0..long).map(|j| coef[j] * u[t - 1 - j]).sum::<f64>();
        }
    }
    if p + q > 0 {
        let start = if q > 0 { long + q } else { p };
        if n <= start + p + q + 1 {
            return None;
        }
        let rows = n - start;
        let design = DMatrix::from_fn(rows, p + q, |i, j| {
            let t = i + start;
            if j < p {
                u[t - 1 - j]
            } else {
                eps[t - 1 - (j - p)]
            }
        });
        let target = DVector::from_fn(rows, |i, _| u[i + start]);
        let coef = linalg::least_squares(&design, &target)?;
        phi.copy_from_slice(&coef.as_slice()[..p]);
        gamma.copy_from_slice(&coef.as_slice()[p..]);
    }
    let ar = free_from_ar(&phi).unwrap_or_else(|| vec![0.0; p]);
    let ma = free_from_ma(&gamma)
        .or_else(|| free_from_ma(&reflect_ma(&gamma).0))
        .unwrap_or_else(|| vec![0.0; q]);
    Some(ar.into_iter().chain(ma).collect())
}

fn starting_points(u: &[f64], p: usize, q: usize, opts: &ArmaOptions) -> Vec<Vec<f64>> {
    let zero = vec![0.0; p + q];
    let mut starts = Vec::new();
    let centre = opts
        .warm_start
        .clone()
        .filter(|w| w.len() == p + q)
        .or_else(|| hannan_rissanen(u, p, q));
    if let Some(c) = &centre {
        starts.push(c.clone());
    }
    starts.push(zero.clone());
    let centre = centre.unwrap_or(zero);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.restart_scale).expect("valid scale");
    for _ in 0..opts.restarts {
        starts.push(centre.iter().map(|c| c + noise.sample(&mut rng)).collect());
    }
    starts
}

/// Central-difference Hessian.
fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(k, k);
    let mut xt = x.to_vec();
    for i in 0..k {
        xt[i] = x[i] + h[i];
        let fp = f(&xt);
        xt[i] = x[i] - h[i];
        let fm = f(&xt);
        xt[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xt[i] = x[i] + si * h[i];
                xt[j] = x[j] + sj * h[j];
                let v = f(&xt);
                xt[i] = x[i];
                xt[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn standard_errors(psi: &[f64], p: usize, q: usize, y: &[f64], x: &[Vec<f64>]) -> Vec<f64> {
    let hess = numerical_hessian(|v| loglik_natural(v, p, q, y, x), psi);
    let info = -hess;
    let nan = vec![f64::NAN; psi.len()];
    if !info.iter().all(|v| v.is_finite()) {
        return nan;
    }
    match info.cholesky() {
        Some(c) => {
            let cov = c.inverse();
            (0..psi.len()).map(|i| cov[(i, i)].sqrt()).collect()
        }
        None => nan,
    }
}

fn assemble(
    y: &[f64],
    x: &[Vec<f64>],
    p: usize,
    q: usize,
    theta: &[f64],
    best: &Profile,
    opt: Option<&BfgsResult>,
    opts: &ArmaOptions,
) -> ArmaRegModel {
    let (ar, ma) = split_free(theta, p);
    let sys = ArmaSystem::new(&ar, &ma).expect("validated system");
    let intercept = best.beta[0];
    let factor_coef = best.beta[1..].to_vec();
    let u = regression_errors(y, x, intercept, &factor_coef);
    let out = filter_columns(&sys, &[&u]);
    let innovations = out.innovations[0].clone();
    let fitted: Vec<f64> = y.iter().zip(&innovations).map(|(yt, v)| yt - v).collect();
    let mut psi = vec![intercept];
    psi.extend(&factor_coef);
    psi.extend(&ar);
    psi.extend(&ma);
    let coef_se = if opts.compute_se {
        standard_errors(&psi, p, q, y, x)
    } else {
        vec![f64::NAN; psi.len()]
    };
    let boundary = max_abs_pacf(theta) > opts.boundary_pacf;
    ArmaRegModel {
        p,
        q,
        intercept,
        factor_coef,
        ar,
        ma,
        innovation_var: best.sigma2,
        loglik: best.loglik,
        coef_se,
        n_obs: y.len(),
        converged: opt.map_or(true, |o| o.converged),
        boundary,
        iterations: opt.map_or(0, |o| o.iterations),
        free_params: theta.to_vec(),
        regression_errors: u,
        innovations,
        fitted,
        end_state: out.end_states[0].clone(),
        end_cov: out.end_cov,
    }
}

/// Regression of `y` on the factor columns `x` with ARMA(p, q) errors by
/// exact maximum likelihood.
pub fn fit_armareg(
    y: &[f64],
    x: &[Vec<f64>],
    p: usize,
    q: usize,
    opts: &ArmaOptions,
) -> Result<ArmaRegModel, ArmaError> {
    let n = y.len();
    let r = x.len();
    if p > opts.max_order || q > opts.max_order {
        return Err(ArmaError::Order { p, q, max: opts.max_order });
    }
    if let Some(c) = x.iter().find(|c| c.len() != n) {
        return Err(ArmaError::Shape(format!("factor column has {} rows, target {n}", c.len())));
    }
    let needed = 2 * (p + q) + r + 2;
    if n < needed {
        return Err(ArmaError::TooShort { n, needed });
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(ArmaError::NonFinite);
    }
    let ones = vec![1.0; n];
    let cols = stacked(y, &ones, x);
    let ols_beta = ols(y, x).ok_or(ArmaError::Singular)?;

    if p + q == 0 {
        let sys = ArmaSystem::new(&[], &[]).expect("white noise");
        let best = profile(&sys, &cols).ok_or(ArmaError::Singular)?;
        return Ok(assemble(y, x, 0, 0, &[], &best, None, opts));
    }

    let u = regression_errors(y, x, ols_beta[0], &ols_beta[1..]);
    let objective = |theta: &[f64]| match profile_free(theta, p, &cols) {
        Some(pr) => -pr.loglik,
        None => f64::INFINITY,
    };
    let mut best: Option<BfgsResult> = None;
    for start in starting_points(&u, p, q, opts) {
        let res = bfgs(objective, &start, &opts.bfgs);
        if !res.f.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => res.f < b.f - 1e-9 || (res.f <= b.f + 1e-9 && res.converged && !b.converged),
        };
        if better {
            best = Some(res);
        }
    }
    let best = best.ok_or(ArmaError::NoValidStart)?;
    let prof = profile_free(&best.x, p, &cols).ok_or(ArmaError::Singular)?;
    let model = assemble(y, x, p, q, &best.x, &prof, Some(&best), opts);
    if !best.converged {
        return Err(ArmaError::NotConverged(Box::new(model)));
    }
    Ok(model)
}

#[cfg(test)]
pub(super) fn profile_loglik_free(theta: &[f64], p: usize, y: &[f64], x: &[Vec<f64>]) -> Option<f64> {
    let ones = vec![1.0; y.len()];
    let cols = stacked(y, &ones, x);
    profile_free(theta, p, &cols).map(|pr| pr.loglik)
}
