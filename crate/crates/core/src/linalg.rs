//! Dense matrix aliases and the handful of matrix utilities shared by every
//! module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;
pub type CVec = DVector<Complex64>;

/// `[a, b] = ab - ba`.
pub fn commutator(a: &RMat, b: &RMat) -> RMat {
    a * b - b * a
}

pub fn commutator_c(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn symmetric_part(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

pub fn antisymmetric_part(m: &RMat) -> RMat {
    (m - m.transpose()) * 0.5
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

pub fn max_abs_diff(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn max_abs_diff_c(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    max_abs_diff_c(m, &m.adjoint())
}

pub fn symmetry_deviation(m: &RMat) -> f64 {
    max_abs_diff(m, &m.transpose())
}

/// Hermiticity check with the relative tolerance `tol * max(1, max|M|)`.
pub fn ensure_hermitian(m: &CMat, tol: f64) -> Result<()> {
    ensure_square_c(m)?;
    let dev = hermitian_deviation(m);
    if dev > tol * max_abs_c(m).max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(())
}

pub fn ensure_square(m: &RMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(shape_err(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn ensure_square_c(m: &CMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(shape_err(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn ensure_same_shape(a: &RMat, b: &RMat) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn shape_err(expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        expected: expected.into(),
        got: got.into(),
    }
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn is_nonnegative(m: &RMat) -> bool {
    m.iter().all(|x| x.is_finite() && *x >= 0.0)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &RMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// 2-norm condition number; infinite for singular matrices.
pub fn condition_number(m: &RMat) -> f64 {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Least-squares slope of `log(errors)` against `log(steps)`.
pub fn log_log_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    linear_fit(&xs, &ys).0
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
