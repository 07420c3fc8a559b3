//! Polynomial evaluation and least-squares fitting.
//!
//! Coefficients are stored in ascending order: `c[0] + c[1] u + c[2] u^2 + ...`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points for a degree-{degree} fit, got {got}")]
    InsufficientPoints {
        needed: usize,
        got: usize,
        degree: usize,
    },
    #[error("x and y have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("normal equations are singular")]
    Singular,
}

/// Evaluate a polynomial with Horner's scheme.
///
/// Order of operations is fixed: `acc = c[n]`, then for `k = n-1 .. 0`,
/// `acc = acc * u + c[k]`, each step a separate multiply and add (no fused
/// multiply-add), so results are bit-reproducible across targets.
///
/// An empty slice evaluates to zero.
#[inline]
pub fn horner(coeffs: &[f64], u: f64) -> f64 {
    let Some((&last, rest)) = coeffs.split_last() else {
        return 0.0;
    };
    let mut acc = last;
    for &c in rest.iter().rev() {
        acc = acc * u + c;
    }
    acc
}

/// Value and first derivative in a single Horner pass.
#[inline]
pub fn horner_with_derivative(coeffs: &[f64], u: f64) -> (f64, f64) {
    let Some((&last, rest)) = coeffs.split_last() else {
        return (0.0, 0.0);
    };
    let mut p = last;
    let mut dp = 0.0;
    for &c in rest.iter().rev() {
        dp = dp * u + p;
        p = p * u + c;
    }
    (p, dp)
}

/// Coefficients of the derivative polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Solve the least-squares problem `min ||y - sum_k b_k x^(k+first)||` for
/// `k = 0 .. n_terms`, with the abscissa rescaled to `[-1, 1]` internally.
fn solve_powers(
    x: &[f64],
    y: &[f64],
    first_power: usize,
    n_terms: usize,
) -> Result<Vec<f64>, FitError> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut ata = DMatrix::<f64>::zeros(n_terms, n_terms);
    let mut aty = DVector::<f64>::zeros(n_terms);
    let mut row = vec![0.0; n_terms];
    for (&xi, &yi) in x.iter().zip(y) {
        let t = xi / scale;
        let mut pw = t.powi(first_power as i32);
        for r in row.iter_mut() {
            *r = pw;
            pw *= t;
        }
        for i in 0..n_terms {
            aty[i] += row[i] * yi;
            for j in 0..=i {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..n_terms {
        for j in 0..i {
            ata[(j, i)] = ata[(i, j)];
        }
    }
    let chol = ata.cholesky().ok_or(FitError::Singular)?;
    let b = chol.solve(&aty);
    Ok(b
        .iter()
        .enumerate()
        .map(|(k, v)| v / scale.powi((k + first_power) as i32))
        .collect())
}

/// Unconstrained least-squares polynomial fit of the given degree.
pub fn fit_least_squares(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < degree + 1 {
        return Err(FitError::InsufficientPoints {
            needed: degree + 1,
            got: x.len(),
            degree,
        });
    }
    solve_powers(x, y, 0, degree + 1)
}

/// Least-squares fit through the origin (`c[0] = 0`) with the linear
/// coefficient bounded below by `min_linear`.
///
/// The unconstrained zero-intercept problem is solved first; if its linear
/// coefficient falls below the bound, `c[1]` is pinned to the bound and the
/// remaining coefficients are refit against `y - c[1] x`. Returns the full
/// coefficient vector including the zero constant term.
pub fn fit_through_origin(
    x: &[f64],
    y: &[f64],
    degree: usize,
    min_linear: f64,
    min_points: usize,
) -> Result<Vec<f64>, FitError> {
    assert!(degree >= 1);
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch(x.len(), y.len()));
    }
    let needed = min_points.max(degree);
    if x.len() < needed {
        return Err(FitError::InsufficientPoints {
            needed,
            got: x.len(),
            degree,
        });
    }
    let free = solve_powers(x, y, 1, degree)?;
    let mut coeffs = Vec::with_capacity(degree + 1);
    coeffs.push(0.0);
    if free[0] >= min_linear {
        coeffs.extend(free);
        return Ok(coeffs);
    }
    coeffs.push(min_linear);
    if degree >= 2 {
        let resid: Vec<f64> = x.iter().zip(y).map(|(&u, &i)| i - min_linear * u).collect();
        coeffs.extend(solve_powers(x, &resid, 2, degree - 1)?);
    }
    Ok(coeffs)
}
