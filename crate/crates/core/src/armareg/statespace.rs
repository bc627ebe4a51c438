//! Exact Gaussian filtering of an ARMA(p, q) error in the Harvey state
//! form: `u_t = Z α_t`, `α_{t+1} = T α_t + R v_{t+1}` with `Z = e_1`,
//! first column of `T` holding `φ`, a shifted identity above the diagonal
//! and `R = (1, γ_1, ..., γ_{m-1})'`.

use nalgebra::DMatrix;

use crate::linalg;

/// Relative change in `P` below which the filter switches to its steady
/// state.
const STEADY_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct ArmaSystem {
    pub m: usize,
    pub phi: Vec<f64>,
    pub r: Vec<f64>,
    /// Stationary state covariance for unit innovation variance, row-major.
    pub p0: Vec<f64>,
}

impl ArmaSystem {
    pub fn new(phi: &[f64], gamma: &[f64]) -> Option<Self> {
        let m = phi.len().max(gamma.len() + 1);
        let mut phi_m = vec![0.0; m];
        phi_m[..phi.len()].copy_from_slice(phi);
        let mut r = vec![0.0; m];
        r[0] = 1.0;
        r[1..=gamma.len()].copy_from_slice(gamma);
        let t = DMatrix::from_fn(m, m, |i, j| if j == 0 { phi_m[i] } else if j == i + 1 { 1.0 } else { 0.0 });
        let rv = DMatrix::from_column_slice(m, 1, &r);
        let q = &rv * rv.transpose();
        let p0 = linalg::solve_discrete_lyapunov(&t, &q)?;
        if p0[(0, 0)] <= 0.0 || !p0.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut flat = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                flat[i * m + j] = p0[(i, j)];
            }
        }
        Some(Self { m, phi: phi_m, r, p0: flat })
    }

    /// `P ← T P T' + R R'` with `T` in its sparse form.
    fn predict_cov(&self, p: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let m = self.m;
        // tmp = T P: row i is φ_i P[0,:] + P[i+1,:].
        for i in 0..m {
            for j in 0..m {
                let next = if i + 1 < m { p[(i + 1) * m + j] } else { 0.0 };
                tmp[i * m + j] = self.phi[i] * p[j] + next;
            }
        }
        // out = tmp T' + R R': column j of T' is row j of T.
        for i in 0..m {
            for j in 0..m {
                let next = if j + 1 < m { tmp[i * m + j + 1] } else { 0.0 };
                out[i * m + j] = tmp[i * m] * self.phi[j] + next + self.r[i] * self.r[j];
            }
        }
    }

    fn predict_state(&self, a: &mut [f64]) {
        let first = a[0];
        for i in 0..self.m {
            let next = if i + 1 < self.m { a[i + 1] } else { 0.0 };
            a[i] = self.phi[i] * first + next;
        }
    }
}

/// Innovations of several series run through the same ARMA filter.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `innovations[c][t]`, column `c` of the input.
    pub innovations: Vec<Vec<f64>>,
    /// Innovation variances for unit `σ²`.
    pub f: Vec<f64>,
    /// Filtered end states `α_{n|n}` per column.
    pub end_states: Vec<Vec<f64>>,
    /// `P_{n|n}` for unit `σ²`, row-major.
    pub end_cov: Vec<f64>,
}

/// Filters each column of `cols` (all of length `n`) through the ARMA
/// system. The gain is shared across columns, so the innovations are
/// linear in the data.
pub fn filter_columns(sys: &ArmaSystem, cols: &[&[f64]]) -> FilterOutput {
    let m = sys.m;
    let n = cols.first().map_or(0, |c| c.len());
    let nc = cols.len();
    let mut p = sys.p0.clone();
    let mut p_upd = vec![0.0; m * m];
    let mut p_next = vec![0.0; m * m];
    let mut tmp = vec![0.0; m * m];
    let mut k = vec![0.0; m];
    let mut states = vec![vec![0.0; m]; nc];
    let mut innovations = vec![vec![0.0; n]; nc];
    let mut f_out = vec![0.0; n];
    let mut steady = false;
    let mut f = p[0];
    for t in 0..n {
        if !steady {
            f = p[0];
            for i in 0..m {
                k[i] = p[i * m] / f;
            }
            for i in 0..m {
                for j in 0..m {
                    p_upd[i * m + j] = p[i * m + j] - k[i] * p[j * m] ;
                }
            }
        }
        f_out[t] = f;
        for c in 0..nc {
            let a = &mut states[c];
            let v = cols[c][t] - a[0];
            innovations[c][t] = v;
            for i in 0..m {
                a[i] += k[i] * v;
            }
        }
        if t + 1 == n {
            break;
        }
        for a in states.iter_mut() {
            sys.predict_state(a);
        }
        if !steady {
            sys.predict_cov(&p_upd, &mut p_next, &mut tmp);
            let scale = p_next[0].abs().max(1.0);
            let change = p_next
                .iter()
                .zip(&p)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut p, &mut p_next);
            if change < STEADY_TOL * scale {
                steady = true;
                f = p[0];
                for i in 0..m {
                    k[i] = p[i * m] / f;
                }
            }
        }
    }
    FilterOutput {
        innovations,
        f: f_out,
        end_states: states,
        end_cov: p_upd,
    }
}

/// Multi-step prediction of the error from a filtered state: returns
/// `(û_{n+h}, var_{n+h}/σ²)` for `h = 1..=steps`.
pub fn predict_ahead(sys: &ArmaSystem, state: &[f64], cov: &[f64], steps: usize) -> Vec<(f64, f64)> {
    let m = sys.m;
    let mut a = state.to_vec();
    let mut p = cov.to_vec();
    let mut next = vec![0.0; m * m];
    let mut tmp = vec![0.0; m * m];
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        sys.predict_state(&mut a);
        sys.predict_cov(&p, &mut next, &mut tmp);
        std::mem::swap(&mut p, &mut next);
        out.push((a[0], p[0]));
    }
    out
}
