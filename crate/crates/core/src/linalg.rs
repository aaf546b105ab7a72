//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetry tolerance and eigenvalue threshold used when validating covariances.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Ridge added to a covariance whose smallest eigenvalue falls below it.
pub const REGULARIZATION: f64 = 1e-10;

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

/// Checks symmetry (relative to the largest entry) and strict positivity of
/// the spectrum.
pub fn check_spd<T: Scalar>(m: &DMatrix<T>, field: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dims(field, "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::NonPositiveDefinite {
            field: field.into(),
            detail: "non-finite entry".into(),
        });
    }
    let scale = max_abs(m).max(T::one());
    let skew = max_abs(&(m - m.transpose()));
    if skew > T::lit(SYMMETRY_TOL) * scale {
        return Err(Error::NonPositiveDefinite {
            field: field.into(),
            detail: format!("asymmetry {skew:e} exceeds tolerance"),
        });
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let min = eig.iter().fold(T::INFINITY, |acc, &v| acc.min(v));
    if min <= T::zero() {
        return Err(Error::NonPositiveDefinite {
            field: field.into(),
            detail: format!("smallest eigenvalue {min:e}"),
        });
    }
    Ok(())
}

pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::singular(context))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Inverse of a covariance that must be PD; a near-singular matrix gets a
/// small ridge first.
pub fn regularized_spd_inverse<T: Scalar>(m: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    let sym = symmetrize(m);
    let min = sym
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::INFINITY, |acc, &v| acc.min(v));
    let eps = T::lit(REGULARIZATION);
    if min < eps {
        if min <= -eps {
            return Err(Error::singular(context));
        }
        log::warn!("{context}: smallest eigenvalue {min:e}, adding {eps:e}*I before inversion");
        let n = sym.nrows();
        return spd_inverse(&(sym + DMatrix::identity(n, n) * eps), context);
    }
    spd_inverse(&sym, context)
}

pub fn log_det_spd<T: Scalar>(m: &DMatrix<T>, context: &str) -> Result<T> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::singular(context))?;
    let l = chol.l();
    Ok(l.diagonal().iter().fold(T::zero(), |acc, &d| acc + d.ln()) * T::lit(2.0))
}

/// Solves `m x = rhs` for symmetric positive semi-definite `m`, falling back
/// to the pseudo-inverse when `m` is singular.
pub fn psd_solve<T: Scalar>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> DMatrix<T> {
    let sym = symmetrize(m);
    match sym.clone().cholesky() {
        Some(chol) => chol.solve(rhs),
        None => {
            let tol = T::lit(1e-14) * max_abs(&sym);
            let pinv = sym
                .pseudo_inverse(tol)
                .unwrap_or_else(|_| DMatrix::zeros(m.nrows(), m.ncols()));
            pinv * rhs
        }
    }
}

/// log N(residual; 0, cov).
pub fn gaussian_log_density<T: Scalar>(residual: &DVector<T>, cov: &DMatrix<T>, context: &str) -> Result<T> {
    let chol = symmetrize(cov)
        .cholesky()
        .ok_or_else(|| Error::singular(context))?;
    let k = T::from_usize(residual.len()).unwrap();
    let log_det = chol.l().diagonal().iter().fold(T::zero(), |acc, &d| acc + d.ln()) * T::lit(2.0);
    let white = chol.solve(residual);
    let quad = residual.dot(&white);
    Ok(-(k * T::two_pi().ln() + log_det + quad) * T::lit(0.5))
}

/// Clamps the spectrum of a symmetric matrix from below. Returns the clipped
/// matrix and whether any eigenvalue was raised.
pub fn clip_eigenvalues<T: Scalar>(m: &DMatrix<T>, floor: T) -> (DMatrix<T>, bool) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut clipped = false;
    let vals = eig.eigenvalues.map(|v| {
        if v < floor {
            clipped = true;
            floor
        } else {
            v
        }
    });
    if !clipped {
        return (symmetrize(m), false);
    }
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&vals) * v.transpose();
    (symmetrize(&rebuilt), true)
}

pub fn log_sum_exp<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let values: Vec<T> = values.into_iter().collect();
    let max = values.iter().fold(T::NEG_INFINITY, |acc, &v| acc.max(v));
    if !max.is_finite_value() {
        return max;
    }
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// `x ln y` with the `0 ln 0 = 0` convention; a positive weight on a zero
/// probability gives minus infinity.
pub fn xlogy<T: Scalar>(x: T, y: T) -> T {
    if x == T::zero() {
        T::zero()
    } else if y <= T::zero() {
        T::NEG_INFINITY
    } else {
        x * y.ln()
    }
}
