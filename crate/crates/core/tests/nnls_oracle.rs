//! Small non-negative least-squares instances checked against exhaustive grid search.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noisetomo::nnls::{kkt_violation, nnls_solve, simplex_solve, KKT_TOLERANCE};

const STEPS: usize = 1000;

fn cost(a: &DMatrix<f64>, b: &[f64], x: &[f64]) -> f64 {
    (0..a.nrows())
        .map(|r| {
            let model: f64 = (0..a.ncols()).map(|c| a[(r, c)] * x[c]).sum();
            (model - b[r]).powi(2)
        })
        .sum()
}

fn grid_argmin(a: &DMatrix<f64>, b: &[f64]) -> [f64; 3] {
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=STEPS {
        for j in 0..=(STEPS - i) {
            let x = [
                i as f64 / STEPS as f64,
                j as f64 / STEPS as f64,
                (STEPS - i - j) as f64 / STEPS as f64,
            ];
            let c = cost(a, b, &x);
            if c < best.0 {
                best = (c, x);
            }
        }
    }
    best.1
}

fn well_conditioned(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(6, 3, |r, c| {
        rng.random_range(0.0..1.0) + if r % 3 == c { 1.5 } else { 0.0 }
    })
}

#[test]
fn noiseless_generator_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..5 {
        let a = well_conditioned(&mut rng);
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let truth: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let b: Vec<f64> = (0..6)
            .map(|r| (0..3).map(|c| a[(r, c)] * truth[c]).sum())
            .collect();

        let sol = nnls_solve(&a, &b, &[1.0; 6]).unwrap();
        assert!(sol.kkt_violation <= KKT_TOLERANCE);
        let grid = grid_argmin(&a, &b);
        for c in 0..3 {
            assert!((sol.x[c] - truth[c]).abs() < 1e-8);
            assert!((grid[c] - truth[c]).abs() <= 1e-3);
        }
    }
}

#[test]
fn noisy_simplex_fit_agrees_with_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let a = well_conditioned(&mut rng);
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0)).collect();
        let sol = simplex_solve(&a, &b, &[1.0; 6]).unwrap();
        assert!(sol.kkt_violation <= KKT_TOLERANCE);
        let grid = grid_argmin(&a, &b);
        for c in 0..3 {
            assert!((sol.x[c] - grid[c]).abs() <= 1e-3, "{:?} vs {grid:?}", sol.x);
        }
        assert!(cost(&a, &b, &sol.x) <= cost(&a, &b, &grid) + 1e-12);
    }
}

#[test]
fn clamped_solution_beats_every_grid_point_on_the_face() {
    // target pulls the first coordinate negative
    let a = DMatrix::from_row_slice(6, 3, &[
        1.0, 0.2, 0.1, //
        0.1, 1.0, 0.3, //
        0.2, 0.1, 1.0, //
        1.0, 0.5, 0.5, //
        0.3, 1.0, 0.2, //
        0.1, 0.4, 1.0,
    ]);
    let b = [-0.5, 1.0, 0.8, -0.2, 1.1, 0.9];
    let sol = nnls_solve(&a, &b, &[1.0; 6]).unwrap();
    assert_eq!(sol.x[0], 0.0);
    assert!(kkt_violation(&a, &b, &[1.0; 6], &sol.x) <= KKT_TOLERANCE);
    let best = cost(&a, &b, &sol.x);
    for i in 0..=200 {
        for j in 0..=200 {
            let x = [0.0, i as f64 / 100.0, j as f64 / 100.0];
            assert!(cost(&a, &b, &x) >= best - 1e-12);
        }
    }
}
