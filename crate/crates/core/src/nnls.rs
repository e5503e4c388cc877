//! Weighted non-negative least squares by the Lawson–Hanson active-set method.
//!
//! Minimises `|| diag(sqrt(w)) (A x - b) ||^2` subject to `x >= 0`, or, in the
//! simplex variant, subject to `x >= 0` and `sum x = 1`. Every
//! returned solution carries its KKT violation, measured on the weighted
//! problem relative to `||A_w||_F (||A_w||_F ||x|| + ||b_w||)` so that the
//! certificate is unaffected by a global rescaling of the weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// KKT tolerance every returned solution satisfies.
pub const KKT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct NnlsOptions {
    /// Outer (variable-adding) iterations; `None` means `10 * columns`.
    pub max_outer_iterations: Option<usize>,
    /// Relative threshold on the dual vector below which the solver stops.
    pub dual_tolerance: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            max_outer_iterations: None,
            dual_tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `|| diag(sqrt(w)) (A x - b) ||`.
    pub residual_norm: f64,
    pub outer_iterations: usize,
    pub kkt_violation: f64,
}

pub fn nnls_solve(design: &DMatrix<f64>, target: &[f64], weights: &[f64]) -> Result<NnlsSolution> {
    nnls_solve_with(design, target, weights, NnlsOptions::default())
}

pub fn nnls_solve_with(
    design: &DMatrix<f64>,
    target: &[f64],
    weights: &[f64],
    options: NnlsOptions,
) -> Result<NnlsSolution> {
    active_set(design, target, weights, options, Feasible::Orthant)
}

/// Weighted least squares over the probability simplex, `x >= 0` and `sum x = 1`.
pub fn simplex_solve(design: &DMatrix<f64>, target: &[f64], weights: &[f64]) -> Result<NnlsSolution> {
    simplex_solve_with(design, target, weights, NnlsOptions::default())
}

pub fn simplex_solve_with(
    design: &DMatrix<f64>,
    target: &[f64],
    weights: &[f64],
    options: NnlsOptions,
) -> Result<NnlsSolution> {
    active_set(design, target, weights, options, Feasible::Simplex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feasible {
    Orthant,
    Simplex,
}

fn active_set(
    design: &DMatrix<f64>,
    target: &[f64],
    weights: &[f64],
    options: NnlsOptions,
    feasible: Feasible,
) -> Result<NnlsSolution> {
    let (a, b) = weighted_system(design, target, weights)?;
    let n = a.ncols();
    let max_outer = options.max_outer_iterations.unwrap_or(10 * n);
    let dual_tol = options.dual_tolerance * a.norm() * b.norm();

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut excluded = vec![false; n];
    let mut outer = 0;

    if feasible == Feasible::Simplex {
        // start from the best vertex
        let start = (0..n)
            .min_by(|&i, &j| {
                let ri = (a.column(i) - &b).norm_squared();
                let rj = (a.column(j) - &b).norm_squared();
                ri.total_cmp(&rj)
            })
            .expect("at least one column");
        x[start] = 1.0;
        passive[start] = true;
    }

    loop {
        let dual = a.tr_mul(&(&b - &a * &x));
        // on the simplex the multiplier of the sum constraint shifts the dual
        let shift = match feasible {
            Feasible::Orthant => 0.0,
            Feasible::Simplex => {
                let (sum, count) = (0..n)
                    .filter(|&j| passive[j])
                    .fold((0.0, 0), |(s, c), j| (s + dual[j], c + 1));
                sum / count as f64
            }
        };
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !excluded[j] && dual[j] - shift > dual_tol)
            .max_by(|&i, &j| dual[i].total_cmp(&dual[j]));
        let Some(entering) = candidate else { break };
        if outer >= max_outer {
            return Err(Error::SolverNonConvergence {
                iterations: outer,
                last: x.iter().copied().collect(),
            });
        }
        outer += 1;
        passive[entering] = true;

        let mut first_pass = true;
        loop {
            let columns: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if columns.is_empty() {
                break;
            }
            let z = match feasible {
                Feasible::Orthant => least_squares(a.select_columns(&columns), &b),
                Feasible::Simplex => unit_sum_least_squares(&a, &b, &columns),
            };
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&j, &v) in columns.iter().zip(z.iter()) {
                    x[j] = v;
                }
                excluded.fill(false);
                break;
            }
            let entering_pos = columns.iter().position(|&j| j == entering);
            if first_pass && entering_pos.is_some_and(|p| z[p] <= 0.0) {
                // entering column is numerically dependent on the passive set
                passive[entering] = false;
                excluded[entering] = true;
                break;
            }
            first_pass = false;

            let mut alpha = f64::INFINITY;
            for (&j, &v) in columns.iter().zip(z.iter()) {
                if v <= 0.0 {
                    let step = x[j] / (x[j] - v);
                    alpha = alpha.min(step);
                }
            }
            for (&j, &v) in columns.iter().zip(z.iter()) {
                x[j] += alpha * (v - x[j]);
            }
            let floor = 1e-15 * x.amax().max(f64::MIN_POSITIVE);
            for &j in &columns {
                if x[j] <= floor {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }

    let residual_norm = (&a * &x - &b).norm();
    let x: Vec<f64> = x.iter().copied().collect();
    let kkt_violation = match feasible {
        Feasible::Orthant => kkt_violation(design, target, weights, &x),
        Feasible::Simplex => simplex_kkt_violation(design, target, weights, &x),
    };
    Ok(NnlsSolution {
        x,
        residual_norm,
        outer_iterations: outer,
        kkt_violation,
    })
}

/// Largest scaled KKT violation of `x` for the weighted problem.
///
/// For zero coordinates the gradient must be non-negative, for positive ones it
/// must vanish; the return value is the worst breach, relative to the problem scale.
pub fn kkt_violation(design: &DMatrix<f64>, target: &[f64], weights: &[f64], x: &[f64]) -> f64 {
    scaled_kkt(design, target, weights, x, Feasible::Orthant)
}

/// KKT violation for the simplex-constrained problem. The gradient is taken
/// relative to the multiplier of the sum constraint, estimated from the
/// positive coordinates; a sum away from one counts as a violation.
pub fn simplex_kkt_violation(design: &DMatrix<f64>, target: &[f64], weights: &[f64], x: &[f64]) -> f64 {
    scaled_kkt(design, target, weights, x, Feasible::Simplex)
}

fn scaled_kkt(
    design: &DMatrix<f64>,
    target: &[f64],
    weights: &[f64],
    x: &[f64],
    feasible: Feasible,
) -> f64 {
    let Ok((a, b)) = weighted_system(design, target, weights) else {
        return f64::INFINITY;
    };
    let x = DVector::from_column_slice(x);
    if x.iter().any(|v| *v < 0.0) {
        return f64::INFINITY;
    }
    let a_norm = a.norm();
    let scale = a_norm * (a_norm * x.norm() + b.norm());
    let gradient = a.tr_mul(&(&a * &x - &b));
    let (shift, sum_defect) = match feasible {
        Feasible::Orthant => (0.0, 0.0),
        Feasible::Simplex => {
            let positive: Vec<f64> = x
                .iter()
                .zip(gradient.iter())
                .filter(|(xi, _)| **xi > 0.0)
                .map(|(_, g)| *g)
                .collect();
            if positive.is_empty() {
                return f64::INFINITY;
            }
            (
                positive.iter().sum::<f64>() / positive.len() as f64,
                (x.sum() - 1.0).abs(),
            )
        }
    };
    if scale == 0.0 {
        return sum_defect;
    }
    let worst = x
        .iter()
        .zip(gradient.iter())
        .map(|(&xi, &g)| {
            let g = g - shift;
            if xi == 0.0 {
                (-g).max(0.0)
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max);
    (worst / scale).max(sum_defect)
}

fn weighted_system(
    design: &DMatrix<f64>,
    target: &[f64],
    weights: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (rows, cols) = design.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Solver("empty design matrix".into()));
    }
    if target.len() != rows || weights.len() != rows {
        return Err(Error::Solver(format!(
            "dimension mismatch: {rows} rows, {} targets, {} weights",
            target.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Solver(format!("weights must be positive, got {w}")));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(rows, cols, |i, j| design[(i, j)] * sqrt_w[i]);
    let b = DVector::from_iterator(rows, target.iter().zip(&sqrt_w).map(|(t, s)| t * s));
    Ok((a, b))
}

/// Least squares on `columns` subject to the coefficients summing to one,
/// by eliminating the last coefficient.
fn unit_sum_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, columns: &[usize]) -> DVector<f64> {
    let (&last, rest) = columns.split_last().expect("non-empty passive set");
    if rest.is_empty() {
        return DVector::from_element(1, 1.0);
    }
    let pivot = a.column(last);
    let mut reduced = a.select_columns(rest);
    for mut col in reduced.column_iter_mut() {
        col -= &pivot;
    }
    let y = least_squares(reduced, &(b - pivot));
    let tail = 1.0 - y.sum();
    let mut z = y.resize_vertically(columns.len(), 0.0);
    z[columns.len() - 1] = tail;
    z
}

/// Unconstrained least squares by Householder QR.
fn least_squares(sub: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if sub.nrows() >= sub.ncols() {
        let qr = sub.clone().qr();
        let rhs = qr.q().tr_mul(b);
        if let Some(z) = qr.r().solve_upper_triangular(&rhs) {
            if z.iter().all(|v| v.is_finite()) {
                return z;
            }
        }
    }
    // rank-deficient or underdetermined: minimum-norm solution
    let dim = sub.nrows().max(sub.ncols());
    let svd = sub.svd(true, true);
    let tol = svd.singular_values.max() * f64::EPSILON * dim as f64;
    svd.solve(b, tol).expect("both SVD factors were requested")
}
