//! Unconstrained parametrisation of stationary AR and invertible MA
//! polynomials through partial autocorrelations.

/// Largest partial autocorrelation magnitude produced by starting values.
const PACF_CLAMP: f64 = 0.98;

/// Maps partial autocorrelations to AR coefficients of
/// `1 - φ_1 L - ... - φ_k L^k` (Durbin–Levinson recursion).
pub fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

/// Inverse of [`pacf_to_ar`]; `None` when the polynomial is not
/// stationary.
pub fn ar_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let k = phi.len();
    let mut cur = phi.to_vec();
    let mut r = vec![0.0; k];
    for m in (0..k).rev() {
        let rm = cur[m];
        if !(rm.abs() < 1.0) {
            return None;
        }
        r[m] = rm;
        let denom = 1.0 - rm * rm;
        let prev: Vec<f64> = (0..m).map(|j| (cur[j] + rm * cur[m - 1 - j]) / denom).collect();
        cur = prev;
    }
    Some(r)
}

pub fn ar_from_free(theta: &[f64]) -> Vec<f64> {
    pacf_to_ar(&theta.iter().map(|t| t.tanh()).collect::<Vec<_>>())
}

/// MA coefficients of `1 + γ_1 L + ... + γ_q L^q`, invertible by
/// construction.
pub fn ma_from_free(theta: &[f64]) -> Vec<f64> {
    ar_from_free(theta).into_iter().map(|c| -c).collect()
}

pub fn free_from_ar(phi: &[f64]) -> Option<Vec<f64>> {
    ar_to_pacf(phi).map(|r| r.iter().map(|v| v.clamp(-PACF_CLAMP, PACF_CLAMP).atanh()).collect())
}

pub fn free_from_ma(gamma: &[f64]) -> Option<Vec<f64>> {
    free_from_ar(&gamma.iter().map(|c| -c).collect::<Vec<_>>())
}

/// Largest partial autocorrelation magnitude implied by free parameters.
pub fn max_abs_pacf(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.tanh().abs()).fold(0.0, f64::max)
}

/// Roots of `1 + c_1 z + ... + c_k z^k` through the companion matrix.
pub fn poly_roots(c: &[f64]) -> Vec<nalgebra::Complex<f64>> {
    let mut k = c.len();
    while k > 0 && c[k - 1] == 0.0 {
        k -= 1;
    }
    if k == 0 {
        return Vec::new();
    }
    // Monic in z: z^k + (c_{k-1}/c_k) z^{k-1} + ... + 1/c_k.
    let mut m = nalgebra::DMatrix::zeros(k, k);
    for j in 0..k {
        let coef = if j + 1 < k { c[k - 2 - j] } else { 1.0 };
        m[(0, j)] = -coef / c[k - 1];
    }
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Smallest modulus of the roots of `1 + c_1 z + ... + c_k z^k`,
/// infinity for a constant polynomial.
pub fn min_root_modulus(c: &[f64]) -> f64 {
    poly_roots(c).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
}

/// Reflects roots of the MA polynomial that lie inside the unit circle,
/// rescaling so the autocovariances are preserved, and returns the
/// invertible coefficients with the innovation-variance factor.
pub fn reflect_ma(gamma: &[f64]) -> (Vec<f64>, f64) {
    let roots = poly_roots(gamma);
    if roots.is_empty() {
        return (gamma.to_vec(), 1.0);
    }
    let mut scale = 1.0;
    let fixed: Vec<nalgebra::Complex<f64>> = roots
        .iter()
        .map(|z| {
            if z.norm() < 1.0 {
                scale /= z.norm_sqr();
                1.0 / z.conj()
            } else {
                *z
            }
        })
        .collect();
    // Rebuild Π (1 - z / root_i), whose constant term is 1.
    let mut poly = vec![nalgebra::Complex::new(1.0, 0.0)];
    for root in &fixed {
        let mut next = vec![nalgebra::Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += *c;
            next[i + 1] -= *c / *root;
        }
        poly = next;
    }
    (poly[1..].iter().map(|c| c.re).collect(), scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_lag_is_identity() {
        assert_eq!(pacf_to_ar(&[0.4]), vec![0.4]);
        assert_eq!(ar_to_pacf(&[0.4]).unwrap(), vec![0.4]);
    }

    #[test]
    fn two_lag_recursion() {
        // φ_1 = r1 (1 - r2), φ_2 = r2.
        let phi = pacf_to_ar(&[0.5, 0.3]);
        assert!((phi[0] - 0.35).abs() < 1e-15);
        assert!((phi[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn nonstationary_ar_has_no_pacf() {
        assert!(ar_to_pacf(&[1.2]).is_none());
        assert!(ar_to_pacf(&[0.5, 0.6]).is_none());
    }

    #[test]
    fn reflection_preserves_autocovariance() {
        // MA(1) with γ = 2 is observationally equivalent to γ = 0.5 with
        // four times the innovation variance.
        let (g, s) = reflect_ma(&[2.0]);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((s - 4.0).abs() < 1e-12);
        let (g, s) = reflect_ma(&[0.3, 0.1]);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.1).abs() < 1e-12 && s == 1.0);
    }

    proptest! {
        #[test]
        fn free_parameters_give_stationary_polynomials(theta in proptest::collection::vec(-4.0f64..4.0, 1..5)) {
            let phi = ar_from_free(&theta);
            let ar_poly: Vec<f64> = phi.iter().map(|c| -c).collect();
            prop_assert!(min_root_modulus(&ar_poly) > 1.0 - 1e-9);
            let gamma = ma_from_free(&theta);
            prop_assert!(min_root_modulus(&gamma) > 1.0 - 1e-9);
        }

        #[test]
        fn pacf_round_trip(r in proptest::collection::vec(-0.95f64..0.95, 1..5)) {
            let back = ar_to_pacf(&pacf_to_ar(&r)).unwrap();
            for (a, b) in r.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
