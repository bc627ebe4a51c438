use super::fit::profile_loglik_free;
use super::*;
use crate::linalg;
use crate::sim::{simulate_arma_regression, ArmaRegDgp};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn dgp(phi: Vec<f64>, theta: Vec<f64>, t: usize) -> ArmaRegDgp {
    ArmaRegDgp {
        a: 1.7,
        b: 1.26,
        phi,
        theta,
        sigma: 0.5,
        t,
    }
}

#[test]
fn white_noise_orders_match_ols() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![], 120), 3);
    let m = fit_armareg(&y, &[x.clone()], 0, 0, &ArmaOptions::default()).unwrap();
    let design = DMatrix::from_fn(y.len(), 2, |t, j| if j == 0 { 1.0 } else { x[t] });
    let b = linalg::least_squares(&design, &DVector::from_column_slice(&y)).unwrap();
    assert!((m.intercept - b[0]).abs() < 1e-6);
    assert!((m.factor_coef[0] - b[1]).abs() < 1e-6);
    let rss: f64 = (0..y.len()).map(|t| (y[t] - b[0] - b[1] * x[t]).powi(2)).sum();
    assert!((m.innovation_var - rss / y.len() as f64).abs() < 1e-9);
    // Forecast is the regression line.
    let fc = m.forecast(&[vec![0.3], vec![-0.4]], 0.95).unwrap();
    assert!((fc[0].point - (b[0] + 0.3 * b[1])).abs() < 1e-6);
    assert!((fc[1].point - (b[0] - 0.4 * b[1])).abs() < 1e-6);
    assert!((fc[1].variance - m.innovation_var).abs() < 1e-12);
}

#[test]
fn recovers_ar1_errors() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![], 1000), 11);
    let m = fit_armareg(&y, &[x], 1, 0, &ArmaOptions::default()).unwrap();
    assert!(m.converged);
    assert!((m.intercept - 1.7).abs() < 0.1, "a = {}", m.intercept);
    assert!((m.factor_coef[0] - 1.26).abs() < 0.1);
    assert!((m.ar[0] - 0.5).abs() < 0.1);
    assert!((m.innovation_var - 0.25).abs() < 0.05);
    assert!(m.coef_se.iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn recovers_arma11_errors() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![0.3], 1000), 5);
    let m = fit_armareg(&y, &[x], 1, 1, &ArmaOptions::default()).unwrap();
    assert!((m.ar[0] - 0.5).abs() < 0.1, "phi = {}", m.ar[0]);
    assert!((m.ma[0] - 0.3).abs() < 0.1, "gamma = {}", m.ma[0]);
    assert!((m.factor_coef[0] - 1.26).abs() < 0.1);
}

#[test]
fn ar1_forecast_closed_form() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.6], vec![], 300), 21);
    let m = fit_armareg(&y, &[x], 1, 0, &ArmaOptions::default()).unwrap();
    let phi = m.ar[0];
    let u_end = *m.regression_errors.last().unwrap();
    let fc = m.forecast(&[vec![0.0], vec![0.0]], 0.95).unwrap();
    assert!((fc[0].point - (m.intercept + phi * u_end)).abs() < 1e-9);
    assert!((fc[1].point - (m.intercept + phi * phi * u_end)).abs() < 1e-9);
    assert!((fc[0].variance - m.innovation_var).abs() < 1e-9);
    assert!((fc[1].variance - m.innovation_var * (1.0 + phi * phi)).abs() < 1e-9);
    let half = fc[1].upper - fc[1].point;
    assert!((half - 1.959964 * fc[1].variance.sqrt()).abs() < 1e-5);
}

#[test]
fn fitted_plus_innovations_reconstruct_y() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.4, 0.2], vec![0.3], 200), 8);
    let m = fit_armareg(&y, &[x], 2, 1, &ArmaOptions::default()).unwrap();
    for t in 0..y.len() {
        assert!((m.fitted[t] + m.innovations[t] - y[t]).abs() < 1e-12);
    }
}

#[test]
fn loglik_never_below_ols_start() {
    for seed in 0..5 {
        let (y, x) = simulate_arma_regression(&dgp(vec![0.3], vec![0.6], 150), seed);
        let xs = vec![x];
        let start = profile_loglik_free(&[0.0, 0.0, 0.0], 2, &y, &xs).unwrap();
        let m = match fit_armareg(&y, &xs, 2, 1, &ArmaOptions::default()) {
            Ok(m) => m,
            Err(ArmaError::NotConverged(m)) => *m,
            Err(e) => panic!("{e}"),
        };
        assert!(m.loglik >= start - 1e-9);
    }
}

#[test]
fn estimates_are_stationary_and_invertible() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.9], vec![-0.8], 200), 2);
    let m = match fit_armareg(&y, &[x], 3, 3, &ArmaOptions::default()) {
        Ok(m) => m,
        Err(ArmaError::NotConverged(m)) => *m,
        Err(e) => panic!("{e}"),
    };
    let ar_poly: Vec<f64> = m.ar.iter().map(|c| -c).collect();
    assert!(params::min_root_modulus(&ar_poly) > 1.0);
    assert!(params::min_root_modulus(&m.ma) >= 1.0 - 1e-9);
    assert!(m.innovation_var > 0.0);
}

#[test]
fn fit_is_deterministic() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![0.3], 150), 4);
    let opts = ArmaOptions {
        seed: 9,
        ..ArmaOptions::default()
    };
    let a = fit_armareg(&y, &[x.clone()], 2, 2, &opts);
    let b = fit_armareg(&y, &[x], 2, 2, &opts);
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(a), Err(b)) => (a.best_iterate().unwrap().clone(), b.best_iterate().unwrap().clone()),
        _ => panic!("different outcomes"),
    };
    assert_eq!(a, b);
}

#[test]
fn model_round_trips_through_json() {
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![], 100), 1);
    let m = fit_armareg(&y, &[x], 1, 0, &ArmaOptions::default()).unwrap();
    let s = serde_json::to_string(&m).unwrap();
    let back: ArmaRegModel = serde_json::from_str(&s).unwrap();
    assert_eq!(back.p, 1);
    assert!((back.ar[0] - m.ar[0]).abs() < 1e-15);
}

#[test]
fn precondition_errors() {
    let y = vec![1.0; 9];
    let x = vec![vec![0.5; 9]];
    assert!(matches!(
        fit_armareg(&y, &x, 2, 2, &ArmaOptions::default()),
        Err(ArmaError::TooShort { .. })
    ));
    assert!(matches!(
        fit_armareg(&y, &x, 5, 0, &ArmaOptions::default()),
        Err(ArmaError::Order { .. })
    ));
    assert!(matches!(
        fit_armareg(&y, &[vec![0.5; 8]], 0, 0, &ArmaOptions::default()),
        Err(ArmaError::Shape(_))
    ));
    let (y, x) = simulate_arma_regression(&dgp(vec![], vec![], 50), 1);
    let m = fit_armareg(&y, &[x], 0, 0, &ArmaOptions::default()).unwrap();
    assert!(matches!(m.forecast(&[vec![f64::NAN]], 0.95), Err(ArmaError::MissingFactorRows { .. })));
    assert!(matches!(m.forecast(&[], 0.95), Err(ArmaError::MissingFactorRows { .. })));
}

fn ks_uniform_pvalue(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    // Asymptotic Kolmogorov distribution.
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lam * lam).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn ljung_box_uniform_under_iid() {
    assert!(ks_uniform_pvalue(ljung_box_pvalues(1)) > 0.05);
}

#[test]
fn ljung_box_detects_ar1() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut u = vec![0.0; 500];
    for t in 1..500 {
        let e: f64 = StandardNormal.sample(&mut rng);
        u[t] = 0.9 * u[t - 1] + e;
    }
    let lb = ljung_box(&u, 10, 0).unwrap();
    assert!(lb.p_value < 0.01);
    assert_eq!(ljung_box(&u, 10, 2).unwrap().df, 8);
}

#[test]
fn ljung_box_rejects_bad_lags() {
    let e = vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1];
    assert!(matches!(ljung_box(&e, 0, 0), Err(ArmaError::Lags { .. })));
    assert!(matches!(ljung_box(&e, 3, 0), Err(ArmaError::Lags { .. })));
    assert!(ljung_box(&e, 2, 0).is_ok());
}

fn ljung_box_pvalues(bank: u64) -> Vec<f64> {
    (0..200)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(bank * 1000 + seed);
            let e: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
            ljung_box(&e, 10, 0).unwrap().p_value
        })
        .collect()
}

#[test]
fn ljung_box_ks_rejection_rate_is_nominal() {
    let rejections = (0..40).filter(|&b| ks_uniform_pvalue(ljung_box_pvalues(b)) < 0.05).count();
    assert!(rejections <= 6, "{rejections}/40 banks rejected");
}

#[test]
fn arma11_matches_reference_mle() {
    // Reference: statsmodels SARIMAX(1,0,1) with exog (1, x) on this sample.
    let (y, x) = simulate_arma_regression(&dgp(vec![0.5], vec![0.3], 1000), 104);
    let m = fit_armareg(&y, &[x], 1, 1, &ArmaOptions::default()).unwrap();
    assert!((m.loglik - -714.0645566673572).abs() < 1e-4, "loglik {}", m.loglik);
    assert!((m.intercept - 1.8275).abs() < 1e-3);
    assert!((m.factor_coef[0] - 1.2494).abs() < 1e-3);
    assert!((m.ar[0] - 0.5441).abs() < 1e-3);
    assert!((m.ma[0] - 0.2444).abs() < 1e-3);
    assert!((m.innovation_var - 0.244).abs() < 1e-3);
}
