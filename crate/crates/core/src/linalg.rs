//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Matrix, Tensor3};

/// Thin SVD with singular values in descending order.
pub struct SortedSvd<T: Real> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

pub fn svd<T: Real>(a: &Matrix<T>) -> Result<SortedSvd<T>> {
    // nalgebra's bidiagonalisation prefers tall inputs.
    let wide = a.nrows() < a.ncols();
    let work = if wide { a.transpose() } else { a.clone() };
    let svd =
        SVD::try_new(work, true, true, T::default_epsilon(), 0).ok_or_else(|| Error::num("SVD did not converge"))?;
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s: Vec<T> = svd.singular_values.iter().copied().collect();
    let (u, v) = if wide { (vt.transpose(), u) } else { (u, vt.transpose()) };
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::num("SVD produced non-finite singular values"));
    }
    Ok(SortedSvd { u, s, v })
}

/// Leading `k` left singular vectors of `a` (as columns).
pub fn leading_left_singular<T: Real>(a: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
    let d = svd(a)?;
    if k > d.u.ncols() {
        // Rank-deficient shapes: pad with an orthonormal completion.
        return Ok(complete_basis(&d.u, k));
    }
    Ok(d.u.columns(0, k).into_owned())
}

/// Extends orthonormal columns `q` to `k` columns by Gram-Schmidt against
/// the canonical basis.
fn complete_basis<T: Real>(q: &Matrix<T>, k: usize) -> Matrix<T> {
    let rows = q.nrows();
    let mut cols: Vec<nalgebra::DVector<T>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < k && e < rows {
        let mut v = nalgebra::DVector::<T>::zeros(rows);
        v[e] = T::one();
        for c in &cols {
            let p = c.dot(&v);
            v -= c * p;
        }
        let nv = v.norm();
        if nv > T::lit(1e-8) {
            cols.push(v / nv);
        }
        e += 1;
    }
    Matrix::from_columns(&cols)
}

/// Truncated higher-order SVD: factor matrices and the projected core.
pub fn hosvd<T: Real>(y: &Tensor3<T>, ranks: [usize; 3]) -> Result<(Tensor3<T>, [Matrix<T>; 3])> {
    let dims = y.dims();
    for n in 0..3 {
        if ranks[n] == 0 || ranks[n] > dims[n] {
            return Err(Error::arg(format!("rank {} along mode {} must lie in 1..={}", ranks[n], n + 1, dims[n])));
        }
    }
    let us = [
        leading_left_singular(&y.unfold0(0), ranks[0])?,
        leading_left_singular(&y.unfold0(1), ranks[1])?,
        leading_left_singular(&y.unfold0(2), ranks[2])?,
    ];
    let uts = [us[0].transpose(), us[1].transpose(), us[2].transpose()];
    let core = y.multi_mode_product([Some(&uts[0]), Some(&uts[1]), Some(&uts[2])]);
    Ok((core, us))
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
///
/// If the Cholesky factorisation fails the diagonal is loaded once with
/// `1e-10 * trace / dim` before giving up.
pub fn spd_inverse(p: &Matrix<f64>) -> Result<(Matrix<f64>, f64)> {
    let sym = (p + p.transpose()) * 0.5;
    let chol = match Cholesky::new(sym.clone()) {
        Some(c) => c,
        None => {
            let dim = sym.nrows().max(1) as f64;
            let jitter = 1e-10 * sym.trace().abs() / dim;
            let loaded = &sym + Matrix::identity(sym.nrows(), sym.ncols()) * jitter.max(f64::MIN_POSITIVE);
            Cholesky::new(loaded).ok_or_else(|| {
                Error::num(format!("matrix of size {} is not positive definite after diagonal loading", sym.nrows()))
            })?
        }
    };
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let inv = chol.inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    if !logdet.is_finite() || inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::num("non-finite inverse of a covariance matrix"));
    }
    Ok((inv, logdet))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
