use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lasso::{LassoFit, LassoOptions, Problem};
use super::SelectError;

/// How the penalty is picked from the cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// The minimiser of the mean held-out error.
    Min,
    /// The largest lambda within one standard error of the minimum.
    #[default]
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub n_lambdas: usize,
    pub n_folds: usize,
    /// Smallest lambda as a fraction of lambda_max; `None` picks 1e-4 when
    /// there are more observations than candidates and 1e-2 otherwise.
    pub min_ratio: Option<f64>,
    pub rule: CvRule,
    pub lasso: LassoOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_lambdas: 100,
            n_folds: 10,
            min_ratio: None,
            rule: CvRule::OneSe,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoCv {
    pub lambda_opt: f64,
    pub opt_index: usize,
    /// Fits on the full sample, one per grid value, decreasing lambda.
    pub path: Vec<LassoFit>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
}

impl LassoCv {
    pub fn best(&self) -> &LassoFit {
        &self.path[self.opt_index]
    }
}

pub fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let lo = (lambda_max * min_ratio).ln();
    let hi = lambda_max.ln();
    (0..n)
        .map(|i| (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Contiguous, nearly equal blocks covering `0..t`.
pub fn contiguous_folds(t: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = t / k;
    let extra = t % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn fit_path(p: &Problem, grid: &[f64], opts: &LassoOptions) -> Vec<LassoFit> {
    let mut beta = vec![0.0; p.k()];
    grid.iter().map(|&l| p.solve(l, &mut beta, opts)).collect()
}

/// Fits the lasso over a log-spaced lambda grid and chooses the penalty by
/// time-ordered block cross-validation.
pub fn lasso_path_cv(y: &[f64], w: &DMatrix<f64>, opts: &CvOptions) -> Result<LassoCv, SelectError> {
    let (t, k) = w.shape();
    if opts.n_folds < 2 || t < opts.n_folds {
        return Err(SelectError::Folds {
            folds: opts.n_folds,
            observations: t,
        });
    }
    if opts.n_lambdas == 0 {
        return Err(SelectError::Shape("empty lambda grid".into()));
    }
    let full = Problem::new(y, w)?;
    let lambda_max = full.lambda_max();
    let ratio = opts.min_ratio.unwrap_or(if t > k { 1e-4 } else { 1e-2 });
    let grid = if lambda_max > 0.0 {
        lambda_grid(lambda_max, opts.n_lambdas, ratio)
    } else {
        vec![0.0]
    };
    let path = fit_path(&full, &grid, &opts.lasso);

    let folds = contiguous_folds(t, opts.n_folds);
    let mut fold_mse = vec![vec![0.0; grid.len()]; folds.len()];
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..t).filter(|i| !test.contains(i)).collect();
        if train.len() < 2 {
            return Err(SelectError::Folds {
                folds: opts.n_folds,
                observations: t,
            });
        }
        let wt = w.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let p = Problem::new(&yt, &wt)?;
        let fits = fit_path(&p, &grid, &opts.lasso);
        for (g, fit) in fits.iter().enumerate() {
            let mut sse = 0.0;
            for i in test.clone() {
                let row: Vec<f64> = w.row(i).iter().copied().collect();
                let e = y[i] - fit.predict_row(&row);
                sse += e * e;
            }
            fold_mse[f][g] = sse / test.len() as f64;
        }
    }
    // Fold errors weighted by fold size, as in the usual block scheme.
    let mut cv_mean = vec![0.0; grid.len()];
    let mut cv_se = vec![0.0; grid.len()];
    for g in 0..grid.len() {
        let mean = folds
            .iter()
            .enumerate()
            .map(|(f, r)| fold_mse[f][g] * r.len() as f64)
            .sum::<f64>()
            / t as f64;
        let var = folds
            .iter()
            .enumerate()
            .map(|(f, r)| (fold_mse[f][g] - mean).powi(2) * r.len() as f64)
            .sum::<f64>()
            / (t as f64 * (folds.len() as f64 - 1.0));
        cv_mean[g] = mean;
        cv_se[g] = var.sqrt();
    }
    // Strict improvement keeps the larger lambda on ties.
    let mut min_idx = 0;
    for g in 1..grid.len() {
        if cv_mean[g] < cv_mean[min_idx] {
            min_idx = g;
        }
    }
    let opt_index = match opts.rule {
        CvRule::Min => min_idx,
        CvRule::OneSe => {
            let bound = cv_mean[min_idx] + cv_se[min_idx];
            (0..=min_idx).find(|&g| cv_mean[g] <= bound).unwrap_or(min_idx)
        }
    };
    Ok(LassoCv {
        lambda_opt: grid[opt_index],
        opt_index,
        path,
        cv_mean,
        cv_se,
    })
}
