use nalgebra::DMatrix;

use super::pc::PcResult;
use super::FactorError;
use crate::linalg;
use crate::stats;

/// Pointwise intervals for loadings (`N×r`) and static factors (`T×r`).
#[derive(Debug, Clone)]
pub struct ConfidenceBands {
    pub level: f64,
    pub loading_lower: DMatrix<f64>,
    pub loading_upper: DMatrix<f64>,
    pub loading_se: DMatrix<f64>,
    pub factor_lower: DMatrix<f64>,
    pub factor_upper: DMatrix<f64>,
    pub factor_se: DMatrix<f64>,
}

/// Sandwich `A^{-1} B A^{-1} / n` from regressors `z_k` weighted by `e_k²`.
fn sandwich(rows: &[(Vec<f64>, f64)], r: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut a = DMatrix::zeros(r, r);
    let mut b = DMatrix::zeros(r, r);
    for (z, e) in rows {
        for i in 0..r {
            for j in 0..r {
                a[(i, j)] += z[i] * z[j];
                b[(i, j)] += z[i] * z[j] * e * e;
            }
        }
    }
    let a_inv = linalg::spd_inverse(&(a / n));
    &a_inv * (b / n) * &a_inv / n
}

/// Heteroskedasticity-robust asymptotic intervals. Sums skip missing
/// cells and are normalised by the number of cells used. Rows with fewer
/// than `r + 1` usable cells get NaN factor bounds.
pub fn bai_confidence_intervals(pc: &PcResult, level: f64) -> Result<ConfidenceBands, FactorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(FactorError::Level(level));
    }
    let (t, r) = pc.factors.shape();
    let n = pc.loadings.nrows();
    let z = stats::two_sided_z(level);

    let mut loading_se = DMatrix::zeros(n, r);
    for i in 0..n {
        let rows: Vec<(Vec<f64>, f64)> = (0..t)
            .filter(|&s| pc.residuals[(s, i)].is_finite())
            .map(|s| (pc.factors.row(s).iter().copied().collect(), pc.residuals[(s, i)]))
            .collect();
        if rows.len() <= r {
            return Err(FactorError::TooFewCells {
                what: format!("loading {i}"),
                cells: rows.len(),
                needed: r + 1,
            });
        }
        let v = sandwich(&rows, r);
        for j in 0..r {
            loading_se[(i, j)] = v[(j, j)].max(0.0).sqrt();
        }
    }

    let mut factor_se = DMatrix::from_element(t, r, f64::NAN);
    for s in 0..t {
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .filter(|&i| pc.residuals[(s, i)].is_finite())
            .map(|i| (pc.loadings.row(i).iter().copied().collect(), pc.residuals[(s, i)]))
            .collect();
        if rows.len() <= r {
            continue;
        }
        let v = sandwich(&rows, r);
        for j in 0..r {
            factor_se[(s, j)] = v[(j, j)].max(0.0).sqrt();
        }
    }
    Ok(ConfidenceBands {
        level,
        loading_lower: &pc.loadings - &loading_se * z,
        loading_upper: &pc.loadings + &loading_se * z,
        loading_se,
        factor_lower: &pc.factors - &factor_se * z,
        factor_upper: &pc.factors + &factor_se * z,
        factor_se,
    })
}

#[cfg(test)]
mod tests {
    use super::super::pc::pc_extract;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn one_factor(t: usize, n: usize, sigma: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let p: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        DMatrix::from_fn(t, n, |s, i| f[s] * p[i] + sigma * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_noise_gives_zero_width() {
        let f: Vec<f64> = (0..30).map(|t| (t as f64 * 0.3).sin()).collect();
        let x = DMatrix::from_fn(30, 6, |t, i| f[t] * (i as f64 + 1.0));
        let pc = pc_extract(&x, &DMatrix::from_element(30, 6, true), 1).unwrap();
        let ci = bai_confidence_intervals(&pc, 0.95).unwrap();
        assert!(ci.loading_se.max() < 1e-10);
        assert!(ci.factor_se.max() < 1e-10);
    }

    #[test]
    fn factor_width_shrinks_at_root_n() {
        // Homoskedastic noise: half-width ≈ z σ / sqrt(N) once P'P/N = I.
        let sigma = 0.5;
        let z = stats::two_sided_z(0.95);
        let mut logs = Vec::new();
        for (k, n) in [20usize, 40, 80].iter().enumerate() {
            let x = one_factor(400, *n, sigma, 40 + k as u64);
            let pc = pc_extract(&x, &DMatrix::from_element(400, *n, true), 1).unwrap();
            let ci = bai_confidence_intervals(&pc, 0.95).unwrap();
            let hw: f64 = (0..400).map(|s| ci.factor_upper[(s, 0)] - pc.factors[(s, 0)]).sum::<f64>() / 400.0;
            let ratio = hw / (z * sigma / (*n as f64).sqrt());
            assert!(ratio > 0.8 && ratio < 1.2, "N = {n}: ratio {ratio}");
            logs.push(((*n as f64).ln(), hw.ln()));
        }
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn sign_flip_mirrors_intervals() {
        let x = one_factor(100, 10, 0.7, 2);
        let pc = pc_extract(&x, &DMatrix::from_element(100, 10, true), 1).unwrap();
        let mut flipped = pc.clone();
        flipped.loadings.neg_mut();
        flipped.factors.neg_mut();
        let a = bai_confidence_intervals(&pc, 0.9).unwrap();
        let b = bai_confidence_intervals(&flipped, 0.9).unwrap();
        assert!((&a.loading_se - &b.loading_se).abs().max() < 1e-12);
        assert!((&a.loading_upper + &b.loading_lower).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_bad_level() {
        let x = one_factor(20, 5, 0.3, 1);
        let pc = pc_extract(&x, &DMatrix::from_element(20, 5, true), 1).unwrap();
        assert!(bai_confidence_intervals(&pc, 1.0).is_err());
    }
}
