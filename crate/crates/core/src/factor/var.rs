use nalgebra::DMatrix;

use super::FactorError;
use crate::linalg;

/// A VAR(k) without intercept, in companion form.
#[derive(Debug, Clone)]
pub struct VarFit {
    pub lags: usize,
    /// `Φ_1..Φ_k`, each `r×r`.
    pub coefficients: Vec<DMatrix<f64>>,
    /// `rk×rk`.
    pub companion: DMatrix<f64>,
    pub eta_cov: DMatrix<f64>,
    /// Stationary covariance of the stacked state, `rk×rk`.
    pub state_cov: DMatrix<f64>,
    /// Stationary covariance of `f_t`, the leading `r×r` block.
    pub factor_cov: DMatrix<f64>,
    pub spectral_radius: f64,
    pub n_obs: usize,
}

impl VarFit {
    pub fn r(&self) -> usize {
        self.eta_cov.nrows()
    }

    /// Innovation covariance of the stacked state.
    pub fn state_noise(&self) -> DMatrix<f64> {
        let (r, m) = (self.r(), self.companion.nrows());
        let mut q = DMatrix::zeros(m, m);
        q.view_mut((0, 0), (r, r)).copy_from(&self.eta_cov);
        q
    }
}

pub fn companion(coefficients: &[DMatrix<f64>]) -> DMatrix<f64> {
    let k = coefficients.len();
    let r = coefficients[0].nrows();
    let mut c = DMatrix::zeros(r * k, r * k);
    for (l, phi) in coefficients.iter().enumerate() {
        c.view_mut((0, l * r), (r, r)).copy_from(phi);
    }
    if k > 1 {
        c.view_mut((r, 0), (r * (k - 1), r * (k - 1)))
            .copy_from(&DMatrix::identity(r * (k - 1), r * (k - 1)));
    }
    c
}

/// OLS VAR(k) on the rows of `f` whose `k` lags are all finite. NaN rows
/// break the sample.
pub fn fit_var(f: &DMatrix<f64>, k: usize) -> Result<VarFit, FactorError> {
    let (t, r) = f.shape();
    if k == 0 {
        return Err(FactorError::Shape("VAR lag order must be at least 1".into()));
    }
    let finite = |s: usize| f.row(s).iter().all(|v| v.is_finite());
    let rows: Vec<usize> = (k..t).filter(|&s| (s - k..=s).all(finite)).collect();
    let n = rows.len();
    if n <= r * k + 1 {
        return Err(FactorError::TooFewRows {
            rows: n,
            needed: r * k + 2,
        });
    }
    let z = DMatrix::from_fn(n, r * k, |i, c| f[(rows[i] - 1 - c / r, c % r)]);
    let y = DMatrix::from_fn(n, r, |i, c| f[(rows[i], c)]);
    let b = linalg::least_squares_multi(&z, &y).ok_or(FactorError::Singular("VAR design"))?;
    let eta = &y - &z * &b;
    let eta_cov = eta.transpose() * &eta / n as f64;
    let coefficients: Vec<DMatrix<f64>> = (0..k)
        .map(|l| b.view((l * r, 0), (r, r)).transpose())
        .collect();
    let comp = companion(&coefficients);
    let rho = linalg::spectral_radius(&comp);
    if !(rho < 1.0) {
        return Err(FactorError::Explosive(rho));
    }
    let mut q = DMatrix::zeros(r * k, r * k);
    q.view_mut((0, 0), (r, r)).copy_from(&eta_cov);
    let state_cov = linalg::solve_discrete_lyapunov(&comp, &q).ok_or(FactorError::Singular("Lyapunov system"))?;
    let factor_cov = state_cov.view((0, 0), (r, r)).into_owned();
    Ok(VarFit {
        lags: k,
        coefficients,
        companion: comp,
        eta_cov,
        state_cov,
        factor_cov,
        spectral_radius: rho,
        n_obs: n,
    })
}
