use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Returns the loading draw, uniform within `[lower, upper]` entrywise,
/// that minimises `‖F̃ − X P̃ / N‖_F` over `rows`, with its objective.
///
/// Draw `d` uses its own stream of the seeded generator, so the result
/// does not depend on thread count and a larger `n_draws` extends the
/// same sample.
pub fn smoothed_loadings_mc(
    smoothed: &DMatrix<f64>,
    values: &DMatrix<f64>,
    rows: &[usize],
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    n_draws: usize,
    seed: u64,
) -> (DMatrix<f64>, f64) {
    let (n, r) = lower.shape();
    let xb = values.select_rows(rows);
    let fb = smoothed.select_rows(rows);
    let objective = |p: &DMatrix<f64>| (&fb - &xb * p / n as f64).norm();
    let draw = |d: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(d as u64);
        DMatrix::from_fn(n, r, |i, j| {
            let u: f64 = rng.random();
            lower[(i, j)] + u * (upper[(i, j)] - lower[(i, j)])
        })
    };
    let (best, obj) = (0..n_draws.max(1))
        .into_par_iter()
        .map(|d| (d, objective(&draw(d))))
        .reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    (draw(best), obj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let f: Vec<f64> = (0..30).map(|t| (t as f64 * 0.5).sin()).collect();
        let p = [1.0, 0.5, -0.8, 1.3];
        let x = DMatrix::from_fn(30, 4, |t, i| f[t] * p[i] + 0.1 * ((t * 7 + i * 3) as f64).cos());
        let smoothed = DMatrix::from_fn(30, 1, |t, _| f[t] * 0.9);
        let center = DMatrix::from_fn(4, 1, |i, _| p[i]);
        let lower = center.map(|v| v - 0.3);
        let upper = center.map(|v| v + 0.3);
        (smoothed, x, lower, upper)
    }

    #[test]
    fn zero_width_returns_centre() {
        let (s, x, lower, _) = setup();
        let rows: Vec<usize> = (0..30).collect();
        let (p, _) = smoothed_loadings_mc(&s, &x, &rows, &lower, &lower, 50, 1);
        assert_eq!(p, lower);
    }

    #[test]
    fn more_draws_never_worse() {
        let (s, x, lower, upper) = setup();
        let rows: Vec<usize> = (0..30).collect();
        let (_, few) = smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 10, 7);
        let (_, many) = smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 1000, 7);
        assert!(many <= few);
    }

    #[test]
    fn draws_stay_in_bounds_and_repeat() {
        let (s, x, lower, upper) = setup();
        let rows: Vec<usize> = (0..30).collect();
        let (a, oa) = smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 200, 3);
        let (b, ob) = smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 200, 3);
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        for i in 0..4 {
            assert!(a[(i, 0)] >= lower[(i, 0)] && a[(i, 0)] <= upper[(i, 0)]);
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let (s, x, lower, upper) = setup();
        let rows: Vec<usize> = (0..30).collect();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = single.install(|| smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 300, 11));
        let b = multi.install(|| smoothed_loadings_mc(&s, &x, &rows, &lower, &upper, 300, 11));
        assert_eq!(a, b);
    }
}
