use nalgebra::{DMatrix, DVector};

use super::FactorError;
use crate::linalg;

/// Principal-component estimates on a masked panel.
#[derive(Debug, Clone)]
pub struct PcResult {
    /// `N×r`, scaled so that `P'P/N = I`.
    pub loadings: DMatrix<f64>,
    /// `T×r`; rows with too few observed cells hold NaN.
    pub factors: DMatrix<f64>,
    /// `T×N`; NaN where the cell or its row's factor is missing.
    pub residuals: DMatrix<f64>,
    /// Rows used for the eigenproblem.
    pub balanced_rows: Vec<usize>,
    /// Eigenvalues of `X'X` on the balanced rows, descending.
    pub eigenvalues: Vec<f64>,
}

pub fn balanced_rows(mask: &DMatrix<bool>) -> Vec<usize> {
    (0..mask.nrows())
        .filter(|&t| mask.row(t).iter().all(|&m| m))
        .collect()
}

/// Orients each column so its largest-magnitude entry is positive; ties
/// go to the lowest row index.
pub fn orient_columns(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Extracts `r` principal-component factors. Loadings come from the
/// balanced rows; rows with missing cells are projected on the observed
/// loadings by least squares when at least `r + 1` cells are present.
pub fn pc_extract(values: &DMatrix<f64>, mask: &DMatrix<bool>, r: usize) -> Result<PcResult, FactorError> {
    let (t, n) = values.shape();
    if mask.shape() != (t, n) {
        return Err(FactorError::Shape("mask and values differ in shape".into()));
    }
    if r == 0 {
        return Err(FactorError::ZeroFactors);
    }
    let rows = balanced_rows(mask);
    if rows.len() < r + 2 {
        return Err(FactorError::TooFewRows {
            rows: rows.len(),
            needed: r + 2,
        });
    }
    let xb = values.select_rows(&rows);
    if xb.iter().any(|v| !v.is_finite()) {
        return Err(FactorError::NonFinite);
    }
    let (vals, vecs) = linalg::symmetric_eigen_desc(&(xb.transpose() * &xb));
    let rank = vals.iter().filter(|&&v| v > vals[0].abs() * 1e-10).count();
    if r > rank || r > n {
        return Err(FactorError::RankTooLow { r, rank });
    }
    let mut v = vecs.columns(0, r).into_owned();
    orient_columns(&mut v);
    let nf = n as f64;
    let loadings = v * nf.sqrt();

    let mut factors = DMatrix::from_element(t, r, f64::NAN);
    for s in 0..t {
        let obs: Vec<usize> = (0..n).filter(|&i| mask[(s, i)]).collect();
        if obs.len() == n {
            let f = values.row(s) * &loadings / nf;
            factors.set_row(s, &f);
        } else if obs.len() > r {
            let p = loadings.select_rows(&obs);
            let x = DVector::from_iterator(obs.len(), obs.iter().map(|&i| values[(s, i)]));
            if let Some(f) = linalg::least_squares(&p, &x) {
                factors.set_row(s, &f.transpose());
            }
        }
    }
    let mut residuals = DMatrix::from_element(t, n, f64::NAN);
    for s in 0..t {
        if factors[(s, 0)].is_nan() {
            continue;
        }
        for i in 0..n {
            if mask[(s, i)] {
                let common = (factors.row(s) * loadings.row(i).transpose())[(0, 0)];
                residuals[(s, i)] = values[(s, i)] - common;
            }
        }
    }
    Ok(PcResult {
        loadings,
        factors,
        residuals,
        balanced_rows: rows,
        eigenvalues: vals.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn full_mask(t: usize, n: usize) -> DMatrix<bool> {
        DMatrix::from_element(t, n, true)
    }

    #[test]
    fn exact_rank_one_structure() {
        let f: Vec<f64> = (0..20).map(|t| (t as f64 * 0.4).sin()).collect();
        let p = [0.5, -1.0, 2.0, 1.5];
        let x = DMatrix::from_fn(20, 4, |t, i| f[t] * p[i]);
        let pc = pc_extract(&x, &full_mask(20, 4), 1).unwrap();
        assert!(pc.residuals.iter().all(|e| e.abs() < 1e-12));
        let fh: Vec<f64> = pc.factors.column(0).iter().copied().collect();
        let c = crate::stats::pearson(&fh, &f).unwrap();
        assert!((c.abs() - 1.0).abs() < 1e-12);
        // Largest loading (2.0) is oriented positive.
        assert!(pc.loadings[(2, 0)] > 0.0);
    }

    #[test]
    fn identification_restrictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(60, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let pc = pc_extract(&x, &full_mask(60, 12), 3).unwrap();
        let ptp = pc.loadings.transpose() * &pc.loadings / 12.0;
        assert!((ptp - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-8);
        let ftf = pc.factors.transpose() * &pc.factors;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(ftf[(i, j)].abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn hand_three_by_two() {
        // X'X = [[a, b], [b, d]] with a = 14, b = 6, d = 3.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 1.0, 3.0, 1.0]);
        let pc = pc_extract(&x, &full_mask(3, 2), 1).unwrap();
        let (a, b, d) = (14.0f64, 6.0f64, 3.0f64);
        let lam = (a + d) / 2.0 + (((a - d) / 2.0).powi(2) + b * b).sqrt();
        assert!((pc.eigenvalues[0] - lam).abs() < 1e-10);
        // Eigenvector (b, lam - a), normalised, times sqrt(N).
        let norm = (b * b + (lam - a).powi(2)).sqrt();
        let expect = [b / norm * 2f64.sqrt(), (lam - a) / norm * 2f64.sqrt()];
        assert!((pc.loadings[(0, 0)] - expect[0]).abs() < 1e-10);
        assert!((pc.loadings[(1, 0)] - expect[1]).abs() < 1e-10);
    }

    #[test]
    fn column_permutation_leaves_factors_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f: Vec<f64> = (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = DMatrix::from_fn(40, 7, |t, i| f[t] * (i as f64 + 1.0) * 0.3 + rng.sample::<f64, _>(StandardNormal) * 0.5);
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let xp = DMatrix::from_fn(40, 7, |t, i| x[(t, perm[i])]);
        let a = pc_extract(&x, &full_mask(40, 7), 2).unwrap();
        let b = pc_extract(&xp, &full_mask(40, 7), 2).unwrap();
        assert!((a.factors - b.factors).abs().max() < 1e-10);
    }

    #[test]
    fn partial_rows_are_projected() {
        let f: Vec<f64> = (0..15).map(|t| (t as f64).cos()).collect();
        let x = DMatrix::from_fn(15, 5, |t, i| f[t] * (1.0 + i as f64));
        let mut mask = full_mask(15, 5);
        mask[(14, 0)] = false;
        mask[(14, 1)] = false;
        for i in 0..5 {
            mask[(13, i)] = i == 4;
        }
        let mut xv = x.clone();
        for ((t, i), m) in mask.iter().enumerate().map(|(k, m)| ((k % 15, k / 15), m)) {
            if !m {
                xv[(t, i)] = f64::NAN;
            }
        }
        let pc = pc_extract(&xv, &mask, 1).unwrap();
        let full = pc_extract(&x, &full_mask(15, 5), 1).unwrap();
        assert!((pc.factors[(14, 0)] - full.factors[(14, 0)]).abs() < 1e-10);
        assert!(pc.factors[(13, 0)].is_nan());
        assert!(pc.residuals[(13, 4)].is_nan());
    }

    #[test]
    fn too_many_factors_is_an_error() {
        let x = DMatrix::from_fn(10, 3, |t, i| (t as f64) * (i as f64 + 1.0));
        assert!(matches!(pc_extract(&x, &full_mask(10, 3), 2), Err(FactorError::RankTooLow { .. })));
    }
}
