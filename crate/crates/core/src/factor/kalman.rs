use nalgebra::{DMatrix, DVector};

use super::FactorError;
use crate::linalg;

/// Measurement variance the diffuse treatment of a missing cell stands for.
/// Missing cells skip the update, the limit of this variance growing.
pub const DIFFUSE_VARIANCE: f64 = 1e32;

/// Smallest idiosyncratic variance allowed in the measurement equation.
pub const PSI_FLOOR: f64 = 1e-10;

/// How a masked cell enters the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissingCells {
    Skip,
    /// Treat the cell as observed at zero with the given variance.
    Inflate(f64),
}

/// `x_t = Z α_t + e_t`, `e_t ~ N(0, diag h)`; `α_t = T α_{t-1} + η_t`,
/// `η_t ~ N(0, Q)`; `α_0 ~ N(a0, P0)`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub design: DMatrix<f64>,
    pub obs_var: Vec<f64>,
    pub transition: DMatrix<f64>,
    pub state_noise: DMatrix<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Smoothed {
    /// `T×m` smoothed state means.
    pub means: DMatrix<f64>,
    pub covs: Vec<DMatrix<f64>>,
    /// `T×m` filtered state means.
    pub filtered: DMatrix<f64>,
    pub loglik: f64,
}

impl StateSpace {
    fn check(&self, values: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<(), FactorError> {
        let m = self.transition.nrows();
        let n = self.design.nrows();
        let ok = self.transition.ncols() == m
            && self.design.ncols() == m
            && self.obs_var.len() == n
            && self.state_noise.shape() == (m, m)
            && self.init_mean.len() == m
            && self.init_cov.shape() == (m, m)
            && values.ncols() == n
            && mask.shape() == values.shape();
        if ok {
            Ok(())
        } else {
            Err(FactorError::Shape("state-space dimensions are inconsistent".into()))
        }
    }

    /// Filter processing the cells of each period one at a time, followed
    /// by the fixed-interval (Rauch–Tung–Striebel) smoother.
    pub fn smooth(&self, values: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<Smoothed, FactorError> {
        self.smooth_with(values, mask, MissingCells::Skip)
    }

    pub fn smooth_with(
        &self,
        values: &DMatrix<f64>,
        mask: &DMatrix<bool>,
        missing: MissingCells,
    ) -> Result<Smoothed, FactorError> {
        self.check(values, mask)?;
        let t_len = values.nrows();
        let m = self.transition.nrows();
        let n = self.design.nrows();
        let eye = DMatrix::<f64>::identity(m, m);
        let tt = &self.transition;
        let mut a_pred = Vec::with_capacity(t_len);
        let mut p_pred = Vec::with_capacity(t_len);
        let mut a_filt: Vec<DVector<f64>> = Vec::with_capacity(t_len);
        let mut p_filt: Vec<DMatrix<f64>> = Vec::with_capacity(t_len);
        let mut loglik = 0.0;
        for t in 0..t_len {
            let (a0, p0) = if t == 0 {
                (self.init_mean.clone(), self.init_cov.clone())
            } else {
                let a = tt * &a_filt[t - 1];
                let p = tt * &p_filt[t - 1] * tt.transpose() + &self.state_noise;
                (a, (&p + p.transpose()) * 0.5)
            };
            let mut a = a0.clone();
            let mut p = p0.clone();
            for i in 0..n {
                let (x, h) = if mask[(t, i)] {
                    (values[(t, i)], self.obs_var[i])
                } else {
                    match missing {
                        MissingCells::Skip => continue,
                        MissingCells::Inflate(v) => (0.0, v),
                    }
                };
                let z = self.design.row(i).transpose();
                let pz = &p * &z;
                let f = z.dot(&pz) + h;
                if !(f > 0.0) {
                    continue;
                }
                let v = x - z.dot(&a);
                let k = &pz / f;
                a += &k * v;
                let ikz = &eye - &k * z.transpose();
                p = &ikz * &p * ikz.transpose() + &k * k.transpose() * h;
                if mask[(t, i)] {
                    loglik -= 0.5 * ((2.0 * std::f64::consts::PI * f).ln() + v * v / f);
                }
            }
            a_pred.push(a0);
            p_pred.push(p0);
            a_filt.push(a);
            p_filt.push((&p + p.transpose()) * 0.5);
        }

        let mut means = DMatrix::zeros(t_len, m);
        let mut filtered = DMatrix::zeros(t_len, m);
        let mut covs = vec![DMatrix::zeros(m, m); t_len];
        if t_len == 0 {
            return Ok(Smoothed { means, covs, filtered, loglik });
        }
        let mut a_s = a_filt[t_len - 1].clone();
        let mut p_s = p_filt[t_len - 1].clone();
        means.set_row(t_len - 1, &a_s.transpose());
        covs[t_len - 1] = p_s.clone();
        for t in (0..t_len - 1).rev() {
            let j = &p_filt[t] * tt.transpose() * linalg::spd_inverse(&p_pred[t + 1]);
            a_s = &a_filt[t] + &j * (&a_s - &a_pred[t + 1]);
            let p_new = &p_filt[t] + &j * (&p_s - &p_pred[t + 1]) * j.transpose();
            p_s = (&p_new + p_new.transpose()) * 0.5;
            means.set_row(t, &a_s.transpose());
            covs[t] = p_s.clone();
        }
        for t in 0..t_len {
            filtered.set_row(t, &a_filt[t].transpose());
        }
        Ok(Smoothed { means, covs, filtered, loglik })
    }
}

/// Smoothed factors from the measurement `X_t = P f_t + e_t` and the VAR
/// state, returning `T×r` means and variances.
pub fn kalman_smooth(
    values: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    loadings: &DMatrix<f64>,
    idio_var: &[f64],
    companion: &DMatrix<f64>,
    state_noise: &DMatrix<f64>,
    state_cov: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), FactorError> {
    let (n, r) = loadings.shape();
    let m = companion.nrows();
    if m % r != 0 {
        return Err(FactorError::Shape("companion order is not a multiple of r".into()));
    }
    let rho = linalg::spectral_radius(companion);
    if !(rho < 1.0) {
        return Err(FactorError::Explosive(rho));
    }
    let mut design = DMatrix::zeros(n, m);
    design.view_mut((0, 0), (n, r)).copy_from(loadings);
    let ss = StateSpace {
        design,
        obs_var: idio_var.iter().map(|v| v.max(PSI_FLOOR)).collect(),
        transition: companion.clone(),
        state_noise: state_noise.clone(),
        init_mean: DVector::zeros(m),
        init_cov: state_cov.clone(),
    };
    let sm = ss.smooth(values, mask)?;
    let t = values.nrows();
    let means = sm.means.columns(0, r).into_owned();
    let vars = DMatrix::from_fn(t, r, |s, j| sm.covs[s][(j, j)]);
    Ok((means, vars))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// T = 5, r = 1, N = 3 model with AR(1) factor.
    fn hand_model() -> (StateSpace, DMatrix<f64>, f64, f64) {
        let phi = 0.7;
        let q = 0.5;
        let p0 = q / (1.0 - phi * phi);
        let ss = StateSpace {
            design: DMatrix::from_column_slice(3, 1, &[1.0, -0.5, 2.0]),
            obs_var: vec![0.3, 0.8, 1.5],
            transition: DMatrix::from_element(1, 1, phi),
            state_noise: DMatrix::from_element(1, 1, q),
            init_mean: DVector::zeros(1),
            init_cov: DMatrix::from_element(1, 1, p0),
        };
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[0.4, -0.1, 1.2, 0.9, -0.6, 1.1, -0.3, 0.2, -0.9, 0.5, 0.0, 0.7, 1.4, -0.8, 2.2],
        );
        (ss, x, phi, p0)
    }

    /// E[f | observed x] from the joint Gaussian covariance.
    fn joint_oracle(ss: &StateSpace, x: &DMatrix<f64>, mask: &DMatrix<bool>, phi: f64, p0: f64) -> Vec<f64> {
        let t = x.nrows();
        let n = x.ncols();
        let cov_f = |a: usize, b: usize| p0 * phi.powi((a as i32 - b as i32).abs());
        let obs: Vec<(usize, usize)> = (0..t)
            .flat_map(|s| (0..n).map(move |i| (s, i)))
            .filter(|&(s, i)| mask[(s, i)])
            .collect();
        let k = obs.len();
        let z = |i: usize| ss.design[(i, 0)];
        let sxx = DMatrix::from_fn(k, k, |a, b| {
            let (s1, i1) = obs[a];
            let (s2, i2) = obs[b];
            z(i1) * z(i2) * cov_f(s1, s2) + if a == b { ss.obs_var[i1] } else { 0.0 }
        });
        let sfx = DMatrix::from_fn(t, k, |s, b| {
            let (s2, i2) = obs[b];
            z(i2) * cov_f(s, s2)
        });
        let xv = DVector::from_iterator(k, obs.iter().map(|&(s, i)| x[(s, i)]));
        let m = sfx * sxx.try_inverse().unwrap() * xv;
        m.iter().copied().collect()
    }

    #[test]
    fn smoother_matches_joint_conditioning() {
        let (ss, x, phi, p0) = hand_model();
        let mask = DMatrix::from_element(5, 3, true);
        let sm = ss.smooth(&x, &mask).unwrap();
        let oracle = joint_oracle(&ss, &x, &mask, phi, p0);
        for t in 0..5 {
            assert!((sm.means[(t, 0)] - oracle[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn smoother_matches_joint_conditioning_with_missing_tail() {
        let (ss, mut x, phi, p0) = hand_model();
        let mut mask = DMatrix::from_element(5, 3, true);
        for t in 3..5 {
            for i in 0..3 {
                mask[(t, i)] = false;
                x[(t, i)] = f64::NAN;
            }
        }
        let sm = ss.smooth(&x, &mask).unwrap();
        let oracle = joint_oracle(&ss, &x, &mask, phi, p0);
        for t in 0..5 {
            assert!((sm.means[(t, 0)] - oracle[t]).abs() < 1e-8);
        }
        // No observations after t = 2: the smoother extrapolates by Φ.
        assert!((sm.means[(3, 0)] - phi * sm.means[(2, 0)]).abs() < 1e-12);
        assert!((sm.means[(4, 0)] - phi * phi * sm.means[(2, 0)]).abs() < 1e-12);
    }

    #[test]
    fn diffuse_variance_matches_skipping() {
        let (ss, x, _, _) = hand_model();
        let mut mask = DMatrix::from_element(5, 3, true);
        mask[(1, 2)] = false;
        mask[(4, 0)] = false;
        mask[(4, 1)] = false;
        let skip = ss.smooth(&x, &mask).unwrap();
        let inflate = ss.smooth_with(&x, &mask, MissingCells::Inflate(DIFFUSE_VARIANCE)).unwrap();
        assert!((&skip.means - &inflate.means).abs().max() < 1e-12);
    }

    #[test]
    fn noiseless_measurement_recovers_projection() {
        let p = DMatrix::<f64>::from_column_slice(4, 1, &[1.2, 0.8, -0.6, 1.1]);
        let scale = (4.0 / p.norm_squared()).sqrt();
        let p = p * scale;
        let f = [0.3, -1.0, 0.5, 2.0, -0.4, 0.9];
        let noise = [0.01, -0.02, 0.015, 0.0, 0.005, -0.01];
        let x = DMatrix::from_fn(6, 4, |t, i| f[t] * p[(i, 0)] + noise[(t + i) % 6] * (i as f64 - 1.5));
        let mask = DMatrix::from_element(6, 4, true);
        let static_f = &x * &p / 4.0;
        let (means, _) = kalman_smooth(
            &x,
            &mask,
            &p,
            &[1e-12; 4],
            &DMatrix::from_element(1, 1, 0.5),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 4.0 / 3.0),
        )
        .unwrap();
        assert!((means - static_f).abs().max() < 1e-6);
    }
}
