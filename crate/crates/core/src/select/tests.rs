use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::panel::{Block, MaskedSeries, Month, SeriesMeta, TargetSeries, TimeSeriesPanel};

fn normal_matrix(rng: &mut ChaCha8Rng, t: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn folds_are_contiguous_and_cover() {
    let f = contiguous_folds(23, 10);
    assert_eq!(f.len(), 10);
    assert_eq!(f[0], 0..3);
    assert_eq!(f[2], 6..9);
    assert_eq!(f[3], 9..11);
    assert_eq!(f[9].end, 23);
    for w in f.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
}

#[test]
fn grid_is_log_spaced() {
    let g = lambda_grid(2.0, 5, 1e-4);
    assert_eq!(g.len(), 5);
    assert!((g[0] - 2.0).abs() < 1e-12);
    assert!((g[4] - 2e-4).abs() < 1e-15);
    for w in g.windows(3) {
        assert!(((w[0] / w[1]) - (w[1] / w[2])).abs() < 1e-9);
    }
}

#[test]
fn pure_noise_selects_at_most_one() {
    let reps = 100;
    let mut sparse = 0;
    for seed in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let w = normal_matrix(&mut rng, 100, 10);
        let y = normals(&mut rng, 100);
        let cv = lasso_path_cv(&y, &w, &CvOptions::default()).unwrap();
        if cv.best().n_active() <= 1 {
            sparse += 1;
        }
    }
    assert!(sparse * 10 >= reps * 9, "{sparse} of {reps} replications were sparse");
}

#[test]
fn noiseless_recovery_of_two_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = normal_matrix(&mut rng, 120, 10);
    let y: Vec<f64> = (0..120).map(|i| 1.5 * w[(i, 2)] - 0.8 * w[(i, 7)]).collect();
    let cv = lasso_path_cv(&y, &w, &CvOptions::default()).unwrap();
    let fit = cv.best();
    assert!(fit.coefficients[2] != 0.0 && fit.coefficients[7] != 0.0);
}

#[test]
fn single_column_identity_is_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = normal_matrix(&mut rng, 40, 1);
    let y: Vec<f64> = w.column(0).iter().copied().collect();
    let cv = lasso_path_cv(&y, &w, &CvOptions::default()).unwrap();
    assert!(cv.best().coefficients[0] > 0.0);
}

#[test]
fn active_count_non_increasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = normal_matrix(&mut rng, 200, 6);
    let e = normals(&mut rng, 200);
    let y: Vec<f64> = (0..200)
        .map(|i| (0..6).map(|j| w[(i, j)] * (j as f64 + 1.0) * 0.2).sum::<f64>() + e[i])
        .collect();
    let cv = lasso_path_cv(&y, &w, &CvOptions::default()).unwrap();
    // The path is ordered by decreasing lambda.
    for pair in cv.path.windows(2) {
        assert!(pair[0].lambda > pair[1].lambda);
        assert!(pair[0].n_active() <= pair[1].n_active());
    }
    assert_eq!(cv.path[0].n_active(), 0);
}

#[test]
fn one_se_rule_is_no_less_sparse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = normal_matrix(&mut rng, 80, 8);
    let e = normals(&mut rng, 80);
    let y: Vec<f64> = (0..80).map(|i| 0.6 * w[(i, 0)] + e[i]).collect();
    let min = lasso_path_cv(
        &y,
        &w,
        &CvOptions {
            rule: CvRule::Min,
            ..CvOptions::default()
        },
    )
    .unwrap();
    let se = lasso_path_cv(&y, &w, &CvOptions::default()).unwrap();
    assert!(min.cv_mean[min.opt_index] <= min.cv_mean.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!(se.lambda_opt >= min.lambda_opt);
}

#[test]
fn too_few_observations_for_folds() {
    let w = DMatrix::from_element(5, 2, 1.0);
    let err = lasso_path_cv(&[1.0; 5], &w, &CvOptions::default()).unwrap_err();
    assert!(matches!(err, SelectError::Folds { .. }));
}

fn start() -> Month {
    Month::new(2010, 1).unwrap()
}

fn candidate_panel(cols: Vec<Vec<f64>>, ids: &[&str]) -> TimeSeriesPanel {
    let meta = ids
        .iter()
        .map(|id| SeriesMeta::new(*id, Block::HighFreqNontraditional, 1))
        .collect();
    let series = cols.into_iter().map(|c| MaskedSeries::observed(start(), c)).collect();
    TimeSeriesPanel::from_columns(start(), series, meta).unwrap()
}

fn collinear_setup(t: usize, k: usize, seed: u64) -> (TargetSeries, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = normals(&mut rng, t);
    let mut cols = vec![y.iter().map(|v| 2.0 * v + 1.0).collect::<Vec<_>>()];
    for _ in 1..k {
        cols.push(normals(&mut rng, t));
    }
    (TargetSeries::new("y", start(), y).unwrap(), cols)
}

#[test]
fn collinear_candidate_is_the_only_selection() {
    let (y, cols) = collinear_setup(120, 10, 3);
    let ids: Vec<String> = (0..10).map(|j| format!("c{j}")).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let panel = candidate_panel(cols, &id_refs);
    let r = rolling_select(&y, &panel, 12, 0.10, &CvOptions::default()).unwrap();
    assert_eq!(r.selected_ids, vec!["c0".to_string()]);
    assert_eq!(r.frequencies[0], 12);
    assert_eq!(r.indicator_matrix.len(), 12);
    for j in 0..10 {
        assert_eq!(r.frequencies[j], r.indicator_matrix.iter().filter(|row| row[j]).count());
    }
}

#[test]
fn selection_is_invariant_to_column_order() {
    let (y, cols) = collinear_setup(100, 6, 21);
    let ids = ["a", "b", "c", "d", "e", "f"];
    let forward = rolling_select(&y, &candidate_panel(cols.clone(), &ids), 6, 0.2, &CvOptions::default()).unwrap();
    let mut rev_cols = cols;
    rev_cols.reverse();
    let mut rev_ids = ids;
    rev_ids.reverse();
    let backward = rolling_select(&y, &candidate_panel(rev_cols, &rev_ids), 6, 0.2, &CvOptions::default()).unwrap();
    let mut a = forward.selected_ids.clone();
    let mut b = backward.selected_ids.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    for (i, id) in ids.iter().enumerate() {
        let j = rev_ids.iter().position(|x| x == id).unwrap();
        assert_eq!(forward.frequencies[i], backward.frequencies[j]);
    }
}

#[test]
fn identical_copies_select_all_or_none() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = normals(&mut rng, 90);
    let e = normals(&mut rng, 90);
    let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + 0.3 * b).collect();
    let target = TargetSeries::new("y", start(), y).unwrap();
    let panel = candidate_panel(vec![x.clone(), x.clone(), x], &["p", "q", "r"]);
    let r = rolling_select(&target, &panel, 6, 0.5, &CvOptions::default()).unwrap();
    // Rounding in the coordinate updates spreads the tie over every copy,
    // so the counts coincide and nothing strictly exceeds the threshold.
    assert_eq!(r.frequencies, vec![6, 6, 6]);
    assert!(r.selected_ids.is_empty());
    let again = rolling_select(&target, &panel, 6, 0.5, &CvOptions::default()).unwrap();
    assert_eq!(r, again);
}

#[test]
fn alpha_extremes_follow_the_quantile_rule() {
    let (y, cols) = collinear_setup(80, 4, 8);
    let panel = candidate_panel(cols, &["a", "b", "c", "d"]);
    // Near zero the threshold approaches the largest count, so only a
    // strictly unique maximum survives.
    let tight = rolling_select(&y, &panel, 4, 1e-6, &CvOptions::default()).unwrap();
    assert_eq!(tight.frequencies[0], 4);
    assert!(tight.threshold > 3.99 && tight.threshold < 4.0);
    assert_eq!(tight.selected_ids, vec!["a".to_string()]);
    // Near one it approaches the smallest count.
    let loose = rolling_select(&y, &panel, 4, 0.999, &CvOptions::default()).unwrap();
    let min = *loose.frequencies.iter().min().unwrap() as f64;
    assert!(loose.threshold >= min && loose.threshold < min + 0.01);
    for s in &tight.selected_ids {
        assert!(loose.is_selected(s));
    }
}

#[test]
fn tied_maximum_with_small_alpha_is_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = normals(&mut rng, 80);
    let b = normals(&mut rng, 80);
    let y: Vec<f64> = a.iter().zip(&b).map(|(x, z)| x + z).collect();
    let target = TargetSeries::new("y", start(), y).unwrap();
    let panel = candidate_panel(vec![a, b], &["a", "b"]);
    let r = rolling_select(&target, &panel, 4, 1e-3, &CvOptions::default()).unwrap();
    assert_eq!(r.frequencies, vec![4, 4]);
    assert!(r.selected_ids.is_empty());
}

#[test]
fn window_outside_sample_is_rejected() {
    let (y, cols) = collinear_setup(30, 2, 1);
    let panel = candidate_panel(cols, &["a", "b"]);
    assert!(matches!(
        rolling_select(&y, &panel, 30, 0.1, &CvOptions::default()),
        Err(SelectError::WindowTooLarge { .. })
    ));
    assert!(matches!(
        rolling_select(&y, &panel, 5, 1.0, &CvOptions::default()),
        Err(SelectError::Alpha(_))
    ));
}

#[test]
fn partially_observed_candidate_is_skipped_in_early_windows() {
    let (y, mut cols) = collinear_setup(60, 3, 2);
    let late = cols.remove(0);
    let meta = ["late", "b", "c"]
        .iter()
        .map(|id| SeriesMeta::new(*id, Block::HighFreqNontraditional, 1))
        .collect();
    let mut mask = vec![true; 60];
    for m in mask.iter_mut().take(55) {
        *m = false;
    }
    let series = vec![
        MaskedSeries::new(start(), late, mask),
        MaskedSeries::observed(start(), cols.remove(0)),
        MaskedSeries::observed(start(), cols.remove(0)),
    ];
    let panel = TimeSeriesPanel::from_columns(start(), series, meta).unwrap();
    let r = rolling_select(&y, &panel, 3, 0.1, &CvOptions::default()).unwrap();
    assert_eq!(r.frequencies[0], 0);
}
