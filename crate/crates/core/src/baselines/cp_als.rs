use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BaselineOutput;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{cp_reconstruct, mttkrp, Matrix, Tensor3};

/// CP-ALS output with the per-sweep fit trace.
#[derive(Debug, Clone)]
pub struct CpAlsFit<T: Real> {
    pub output: BaselineOutput<T>,
    pub factors: [Matrix<T>; 3],
    /// `1 - ‖y - x‖ / ‖y‖` after each sweep.
    pub fits: Vec<f64>,
    pub ridge_used: bool,
}

/// Rank-`rank` CP decomposition by alternating least squares from a seeded
/// Gaussian start. Sweeps stop when the fit improves by less than `tol`.
/// Normal equations that fail Cholesky are retried with a `1e-10` relative
/// ridge.
pub fn cp_als<T: Real>(y: &Tensor3<T>, rank: usize, max_iters: usize, tol: f64, seed: u64) -> Result<CpAlsFit<T>> {
    if rank == 0 {
        return Err(Error::arg("CP rank must be at least 1"));
    }
    let dims = y.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: [Matrix<T>; 3] = std::array::from_fn(|n| {
        Matrix::from_fn(dims[n], rank, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        })
    });
    let norm_y2 = y.sum_squares().as_f64();
    let norm_y = norm_y2.sqrt().max(f64::MIN_POSITIVE);
    let mut fits = Vec::new();
    let mut ridge_used = false;
    for _ in 0..max_iters {
        let mut last_mttkrp = Matrix::zeros(0, 0);
        for n in 0..3 {
            let (a, b) = ((n + 1) % 3, (n + 2) % 3);
            let v = (u[a].transpose() * &u[a]).component_mul(&(u[b].transpose() * &u[b]));
            let w = mttkrp(y, [&u[0], &u[1], &u[2]], n);
            let solved = match Cholesky::new(v.clone()) {
                Some(c) => c.solve(&w.transpose()),
                None => {
                    ridge_used = true;
                    let ridge = T::lit(1e-10) * num_traits::Float::max(v.trace(), T::one());
                    let loaded = &v + Matrix::identity(rank, rank) * ridge;
                    Cholesky::new(loaded)
                        .ok_or_else(|| Error::num("CP-ALS normal equations singular after ridge"))?
                        .solve(&w.transpose())
                }
            };
            u[n] = solved.transpose();
            if n == 2 {
                last_mttkrp = w;
            }
        }
        // ‖y - x‖² = ‖y‖² - 2<y, x> + ‖x‖²
        let inner = last_mttkrp.component_mul(&u[2]).sum().as_f64();
        let gram = (u[0].transpose() * &u[0])
            .component_mul(&(u[1].transpose() * &u[1]))
            .component_mul(&(u[2].transpose() * &u[2]));
        let resid2 = (norm_y2 - 2.0 * inner + gram.sum().as_f64()).max(0.0);
        let fit = 1.0 - resid2.sqrt() / norm_y;
        let done = fits.last().is_some_and(|prev: &f64| (fit - prev).abs() < tol);
        fits.push(fit);
        if done {
            break;
        }
        // balance column norms across modes; leaves the model unchanged
        for q in 0..rank {
            let norms: Vec<T> = (0..3).map(|n| u[n].column(q).norm()).collect();
            let geo = num_traits::Float::cbrt(norms[0] * norms[1] * norms[2]);
            if geo > T::zero() {
                for n in 0..3 {
                    let f = geo / norms[n];
                    u[n].column_mut(q).scale_mut(f);
                }
            }
        }
    }
    let distributed = cp_reconstruct([&u[0], &u[1], &u[2]], None);
    if !distributed.is_finite() {
        return Err(Error::num("CP-ALS diverged"));
    }
    let output = BaselineOutput::from_distributed(y, distributed)
        .with("rank", rank)
        .with("sweeps", fits.len())
        .with("final_fit", fits.last().copied().unwrap_or(0.0))
        .with("ridge_used", ridge_used);
    Ok(CpAlsFit { output, factors: u, fits, ridge_used })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_tensor_fits_exactly() {
        let y = Tensor3::from_fn([3, 4, 5], |i, j, k| (1.0 + i as f64) * (j as f64 - 1.5) * (0.3 * k as f64).exp());
        let fit = cp_als(&y, 1, 200, 1e-14, 3).unwrap();
        let direct = 1.0 - (&fit.output.distributed - &y).frobenius_norm() / y.frobenius_norm();
        assert!(direct > 1.0 - 1e-8, "{direct}");
    }

    #[test]
    fn zero_rank_rejected() {
        assert!(cp_als(&Tensor3::<f64>::zeros([2, 2, 2]), 0, 10, 1e-6, 0).is_err());
    }
}
