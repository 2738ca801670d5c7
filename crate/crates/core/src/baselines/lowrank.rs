use super::BaselineOutput;
use crate::error::{Error, Result};
use crate::linalg::{self, svd};
use crate::scalar::Real;
use crate::tensor::{Matrix, Tensor3};

/// Adjacent-row differences `y[i+1] - y[i]` as the localized part (one row
/// shorter than `y`); the measurements themselves are the distributed part.
pub fn bipolar<T: Real>(y: &Tensor3<T>) -> Result<BaselineOutput<T>> {
    let [m, n, t] = y.dims();
    if m < 2 {
        return Err(Error::arg("bipolar montage needs at least two electrode rows"));
    }
    let localized = Tensor3::from_fn([m - 1, n, t], |i, j, k| y.get(i + 1, j, k) - y.get(i, j, k));
    Ok(BaselineOutput { localized, distributed: y.clone(), diagnostics: Default::default() })
}

/// Top-`k` principal components of the electrodes-by-time matrix (each
/// electrode centred over time) as the distributed part; the residual is
/// the localized part.
pub fn pca_lowrank<T: Real>(y: &Tensor3<T>, k: usize) -> Result<BaselineOutput<T>> {
    let [m, n, t] = y.dims();
    let channels = m * n;
    if k == 0 || k > channels.min(t) {
        return Err(Error::arg(format!("PCA rank {k} must lie in 1..={}", channels.min(t))));
    }
    // mode-3 unfolding transposed: rows are electrodes, columns samples
    let a = y.unfold0(2).transpose();
    let means: Vec<T> = a.row_iter().map(|r| r.sum() / T::from_count(t)).collect();
    let centred = Matrix::from_fn(channels, t, |c, s| a[(c, s)] - means[c]);
    let d = svd(&centred)?;
    let mut low = Matrix::from_fn(channels, t, |c, _| means[c]);
    for q in 0..k {
        low += d.u.column(q) * (d.v.column(q).transpose() * d.s[q]);
    }
    let distributed = Tensor3::fold0(&low.transpose(), 2, y.dims());
    let explained: T = d.s[..k].iter().map(|&s| s * s).sum();
    let total: T = d.s.iter().map(|&s| s * s).sum();
    let ratio = if total > T::zero() { (explained / total).as_f64() } else { 1.0 };
    Ok(BaselineOutput::from_distributed(y, distributed).with("k", k).with("explained_variance", ratio))
}

/// Truncated HOSVD reconstruction as the distributed part.
pub fn hosvd<T: Real>(y: &Tensor3<T>, ranks: [usize; 3]) -> Result<BaselineOutput<T>> {
    let (core, us) = linalg::hosvd(y, ranks)?;
    let distributed = core.multi_mode_product([Some(&us[0]), Some(&us[1]), Some(&us[2])]);
    Ok(BaselineOutput::from_distributed(y, distributed).with("ranks", ranks.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipolar_examples() {
        let flat = Tensor3::from_fn([3, 2, 5], |_, j, k| (j + k) as f64);
        let out = bipolar(&flat).unwrap();
        assert_eq!(out.localized.dims(), [2, 2, 5]);
        assert!(out.localized.data().iter().all(|v| *v == 0.0));
        let ramp = Tensor3::from_fn([4, 2, 3], |i, _, _| i as f64);
        assert!(bipolar(&ramp).unwrap().localized.data().iter().all(|v| *v == 1.0));
        assert_eq!(bipolar(&ramp).unwrap().distributed, ramp);
        assert!(bipolar(&Tensor3::<f64>::zeros([1, 2, 3])).is_err());
    }

    #[test]
    fn pca_full_rank_and_rank_one() {
        let y = Tensor3::from_fn([2, 2, 30], |i, j, k| ((i * 3 + j) as f64 * 0.7 + k as f64 * 0.3).sin());
        let out = pca_lowrank(&y, 4).unwrap();
        assert!(out.localized.frobenius_norm() < 1e-9 * y.frobenius_norm());
        let r1 = Tensor3::from_fn([2, 2, 30], |i, j, k| (1.0 + i as f64 + 2.0 * j as f64) * (k as f64 * 0.2).cos());
        let out = pca_lowrank(&r1, 1).unwrap();
        assert!((&out.distributed - &r1).frobenius_norm() < 1e-10);
        assert!(pca_lowrank(&y, 0).is_err() && pca_lowrank(&y, 5).is_err());
    }

    #[test]
    fn hosvd_full_rank_is_exact() {
        let y = Tensor3::from_fn([2, 3, 4], |i, j, k| ((i + 1) as f64).powi(j as i32) - k as f64);
        let out = hosvd(&y, [2, 3, 4]).unwrap();
        assert!(out.localized.frobenius_norm() < 1e-9 * y.frobenius_norm());
        assert!(hosvd(&y, [3, 3, 4]).is_err());
    }
}
