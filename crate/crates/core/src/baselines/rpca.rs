use num_traits::Float;

use super::BaselineOutput;
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::scalar::Real;
use crate::tensor::{Matrix, Tensor3};

/// `sign(x) max(|x| - t, 0)`.
pub fn soft_threshold<T: Real>(x: T, t: T) -> T {
    let mag = Float::abs(x) - t;
    if mag > T::zero() {
        Float::signum(x) * mag
    } else {
        T::zero()
    }
}

/// Principal component pursuit on the mode-3 unfolding by the inexact
/// augmented Lagrangian method: singular-value thresholding for the
/// low-rank part, entrywise soft thresholding for the sparse part.
///
/// The low-rank part is the distributed estimate and `y - distributed` the
/// localized one, which equals the sparse part up to the final constraint
/// residual (below `tol` relative).
pub fn rpca<T: Real>(y: &Tensor3<T>, lambda: f64, tol: f64, max_iters: usize) -> Result<BaselineOutput<T>> {
    if !(lambda > 0.0) {
        return Err(Error::arg("RPCA lambda must be positive"));
    }
    let d = y.unfold0(2);
    let d_norm = d.norm();
    if d_norm == T::zero() {
        return Ok(BaselineOutput::from_distributed(y, y.clone()).with("iterations", 0).with("converged", true));
    }
    let lam = T::lit(lambda);
    let norm_two = svd(&d)?.s[0];
    let norm_inf = d.amax() / lam;
    let dual = Float::max(norm_two, norm_inf);
    let mut dual_var = &d / dual;
    let mut mu = T::lit(1.25) / norm_two;
    let mu_max = mu * T::lit(1e7);
    let rho = T::lit(1.5);
    let (rows, cols) = d.shape();
    let mut low = Matrix::<T>::zeros(rows, cols);
    let mut converged = false;
    let mut iterations = 0;
    let mut rel = f64::INFINITY;
    for it in 0..max_iters {
        iterations = it + 1;
        let inv_mu = T::one() / mu;
        let shifted = &d - &low + &dual_var * inv_mu;
        let sparse = shifted.map(|v| soft_threshold(v, lam * inv_mu));
        let svd_in = &d - &sparse + &dual_var * inv_mu;
        let dec = svd(&svd_in)?;
        let mut next = Matrix::zeros(rows, cols);
        let mut rank = 0;
        for (q, &s) in dec.s.iter().enumerate() {
            let shrunk = s - inv_mu;
            if shrunk > T::zero() {
                next += dec.u.column(q) * (dec.v.column(q).transpose() * shrunk);
                rank += 1;
            }
        }
        low = next;
        let z = &d - &low - &sparse;
        dual_var += &z * mu;
        mu = Float::min(mu * rho, mu_max);
        rel = (z.norm() / d_norm).as_f64();
        if rel < tol {
            converged = true;
            log::debug!("RPCA converged after {iterations} iterations, rank {rank}");
            break;
        }
    }
    if !converged {
        log::warn!("RPCA stopped at {iterations} iterations with relative residual {rel:.3e}");
    }
    let distributed = Tensor3::fold0(&low, 2, y.dims());
    Ok(BaselineOutput::from_distributed(y, distributed)
        .with("lambda", lambda)
        .with("iterations", iterations)
        .with("converged", converged)
        .with("relative_residual", rel))
}
