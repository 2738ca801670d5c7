//! Dense third-order tensors and the multilinear algebra used by every
//! decomposition in the crate.
//!
//! Storage is mode-1 fastest: entry `(i, j, k)` of an `m × n × t` tensor
//! lives at `i + m * (j + n * k)`.
//!
//! Unfoldings use the cyclic convention. The row index of `X_(n)` is the
//! mode-`n` index and the column index enumerates the two remaining modes in
//! the order `n+1, n+2` (wrapping), the first of them fastest:
//!
//! | mode | row | column        |
//! |------|-----|---------------|
//! | 1    | i   | j + n * k     |
//! | 2    | j   | k + t * i     |
//! | 3    | k   | i + m * j     |
//!
//! With this choice `X_(1)` is a plain reshape of the storage.

use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DMatrixView};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Column-major dense matrix.
pub type Matrix<T> = DMatrix<T>;

/// Dense `m × n × t` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

fn check_mode(mode: usize) -> Result<usize> {
    if (1..=3).contains(&mode) {
        Ok(mode - 1)
    } else {
        Err(Error::arg(format!("mode must be 1, 2 or 3, got {mode}")))
    }
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![T::zero(); dims.iter().product()] }
    }

    /// Wraps `data` laid out mode-1 fastest. Fails on a length mismatch or a
    /// non-finite entry.
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(Error::arg(format!(
                "tensor {}x{}x{} needs {want} entries, got {}",
                dims[0],
                dims[1],
                dims[2],
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::num(format!("non-finite entry at linear index {p}")));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Time series (mode-3 fibre) of electrode `(i, j)`.
    pub fn series(&self, i: usize, j: usize) -> Vec<T> {
        let step = self.dims[0] * self.dims[1];
        self.data[self.offset(i, j, 0)..].iter().step_by(step).copied().collect()
    }

    pub fn set_series(&mut self, i: usize, j: usize, values: &[T]) {
        assert_eq!(values.len(), self.dims[2], "series length");
        let step = self.dims[0] * self.dims[1];
        let start = self.offset(i, j, 0);
        for (k, v) in values.iter().enumerate() {
            self.data[start + k * step] = *v;
        }
    }

    /// Samples `start..end` along mode 3.
    pub fn time_range(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.dims[2], "time range out of bounds");
        let slab = self.dims[0] * self.dims[1];
        Self { dims: [self.dims[0], self.dims[1], end - start], data: self.data[start * slab..end * slab].to_vec() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.dims, other.dims, "tensor dims differ");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { dims: self.dims, data }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        Float::sqrt(self.sum_squares())
    }

    /// Inner product `<self, other>` over all entries.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.dims, other.dims, "tensor dims differ");
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    /// Mode-`mode` unfolding, `mode` in `1..=3`.
    pub fn unfold(&self, mode: usize) -> Result<Matrix<T>> {
        Ok(self.unfold0(check_mode(mode)?))
    }

    pub(crate) fn unfold0(&self, n: usize) -> Matrix<T> {
        let [m, nn, t] = self.dims;
        match n {
            0 => Matrix::from_column_slice(m, nn * t, &self.data),
            1 => Matrix::from_fn(nn, t * m, |j, c| self.get(c / t, j, c % t)),
            _ => DMatrixView::from_slice(&self.data, m * nn, t).transpose(),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(a: &Matrix<T>, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let n = check_mode(mode)?;
        let rows = dims[n];
        let cols = dims[(n + 1) % 3] * dims[(n + 2) % 3];
        if a.nrows() != rows || a.ncols() != cols {
            return Err(Error::arg(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {:?}",
                a.nrows(),
                a.ncols(),
                dims
            )));
        }
        Ok(Self::fold0(a, n, dims))
    }

    pub(crate) fn fold0(a: &Matrix<T>, n: usize, dims: [usize; 3]) -> Self {
        let [m, _, t] = dims;
        match n {
            0 => Self { dims, data: a.as_slice().to_vec() },
            1 => Self::from_fn(dims, |i, j, k| a[(j, k + t * i)]),
            _ => Self::from_fn(dims, |i, j, k| a[(k, i + m * j)]),
        }
    }

    /// `self ×_mode u`: replaces mode `mode` (size `u.ncols()`) by `u.nrows()`.
    pub fn mode_product(&self, u: &Matrix<T>, mode: usize) -> Result<Self> {
        let n = check_mode(mode)?;
        if u.ncols() != self.dims[n] {
            return Err(Error::arg(format!(
                "mode-{mode} product needs {} columns, matrix has {}",
                self.dims[n],
                u.ncols()
            )));
        }
        Ok(self.mode_product0(u, n))
    }

    pub(crate) fn mode_product0(&self, u: &Matrix<T>, n: usize) -> Self {
        let [m, nn, t] = self.dims;
        let r = u.nrows();
        match n {
            0 => {
                let x = DMatrixView::from_slice(&self.data, m, nn * t);
                let y = u * x;
                Self { dims: [r, nn, t], data: y.as_slice().to_vec() }
            }
            1 => {
                let mut data = Vec::with_capacity(m * r * t);
                let ut = u.transpose();
                for k in 0..t {
                    let slab = DMatrixView::from_slice(&self.data[k * m * nn..(k + 1) * m * nn], m, nn);
                    let y = slab * &ut;
                    data.extend_from_slice(y.as_slice());
                }
                Self { dims: [m, r, t], data }
            }
            _ => {
                let x = DMatrixView::from_slice(&self.data, m * nn, t);
                let y = x * u.transpose();
                Self { dims: [m, nn, r], data: y.as_slice().to_vec() }
            }
        }
    }

    /// Applies `us[n]` along every mode `n` whose entry is `Some`.
    pub(crate) fn multi_mode_product(&self, us: [Option<&Matrix<T>>; 3]) -> Self {
        // Shrinking modes first keeps intermediates small.
        let mut order: Vec<usize> = (0..3).filter(|&n| us[n].is_some()).collect();
        order.sort_by_key(|&n| {
            let u = us[n].unwrap();
            (u.nrows() as isize - u.ncols() as isize, n)
        });
        let mut out = self.clone();
        for n in order {
            out = out.mode_product0(us[n].unwrap(), n);
        }
        out
    }
}

/// `core ×_1 u1 ×_2 u2 ×_3 u3`.
pub fn tucker_reconstruct<T: Real>(
    core: &Tensor3<T>,
    u1: &Matrix<T>,
    u2: &Matrix<T>,
    u3: &Matrix<T>,
) -> Result<Tensor3<T>> {
    let d = core.dims();
    for (n, u) in [u1, u2, u3].into_iter().enumerate() {
        if u.ncols() != d[n] {
            return Err(Error::arg(format!(
                "factor {} has {} columns but the core has {} along that mode",
                n + 1,
                u.ncols(),
                d[n]
            )));
        }
    }
    Ok(core.multi_mode_product([Some(u1), Some(u2), Some(u3)]))
}

/// Sum of rank-one terms `Σ_r w_r a_r ∘ b_r ∘ c_r` (`w_r = 1` when
/// `weights` is `None`).
pub fn cp_reconstruct<T: Real>(factors: [&Matrix<T>; 3], weights: Option<&[T]>) -> Tensor3<T> {
    let [a, b, c] = factors;
    let r = a.ncols();
    assert!(b.ncols() == r && c.ncols() == r, "CP factors need equal column counts");
    let (m, n, t) = (a.nrows(), b.nrows(), c.nrows());
    let mut data = Vec::with_capacity(m * n * t);
    let mut ac = a.clone();
    for k in 0..t {
        for q in 0..r {
            let w = weights.map_or(T::one(), |w| w[q]) * c[(k, q)];
            ac.column_mut(q).copy_from(&(a.column(q) * w));
        }
        let slab = &ac * b.transpose();
        data.extend_from_slice(slab.as_slice());
    }
    Tensor3 { dims: [m, n, t], data }
}

/// Matricised tensor times Khatri-Rao product along mode `n` (0-based):
/// entry `(i, r)` is `Σ x[...] Π_{k≠n} u_k[idx_k, r]` with `i` the mode-`n`
/// index.
pub fn mttkrp<T: Real>(x: &Tensor3<T>, us: [&Matrix<T>; 3], n: usize) -> Matrix<T> {
    let [m, nn, t] = x.dims();
    let r = us[(n + 1) % 3].ncols();
    let mut out = Matrix::zeros(x.dims()[n], r);
    let mut w = vec![T::zero(); r];
    for k in 0..t {
        for j in 0..nn {
            for i in 0..m {
                let v = x.data[i + m * (j + nn * k)];
                if v == T::zero() {
                    continue;
                }
                let idx = [i, j, k];
                let (a, b) = ((n + 1) % 3, (n + 2) % 3);
                for (q, wq) in w.iter_mut().enumerate() {
                    *wq = us[a][(idx[a], q)] * us[b][(idx[b], q)];
                }
                for (q, wq) in w.iter().enumerate() {
                    out[(idx[n], q)] += v * *wq;
                }
            }
        }
    }
    out
}

impl<T: Real> Add for &Tensor3<T> {
    type Output = Tensor3<T>;
    fn add(self, rhs: Self) -> Tensor3<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Tensor3<T> {
    type Output = Tensor3<T>;
    fn sub(self, rhs: Self) -> Tensor3<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hundreds() -> Tensor3<f64> {
        Tensor3::from_fn([2, 2, 2], |i, j, k| (100 * i + 10 * j + k) as f64)
    }

    #[test]
    fn degenerate_unfold() {
        let x = Tensor3::from_vec([1, 1, 1], vec![5.0]).unwrap();
        for mode in 1..=3 {
            let a = x.unfold(mode).unwrap();
            assert_eq!(a.shape(), (1, 1));
            assert_eq!(a[(0, 0)], 5.0);
            assert_eq!(Tensor3::fold(&a, mode, [1, 1, 1]).unwrap(), x);
        }
    }

    #[test]
    fn mode1_unfolding_by_hand() {
        // columns enumerate (j, k) = (0,0), (1,0), (0,1), (1,1)
        let want = Matrix::from_row_slice(2, 4, &[0., 10., 1., 11., 100., 110., 101., 111.]);
        let x = hundreds();
        assert_eq!(x.unfold(1).unwrap(), want);
        assert_eq!(Tensor3::fold(&want, 1, [2, 2, 2]).unwrap(), x);
    }

    #[test]
    fn mode2_and_mode3_unfoldings_by_hand() {
        let x = hundreds();
        // mode 2: rows j, columns (k, i) with k fastest
        let want2 = Matrix::from_row_slice(2, 4, &[0., 1., 100., 101., 10., 11., 110., 111.]);
        assert_eq!(x.unfold(2).unwrap(), want2);
        // mode 3: rows k, columns (i, j) with i fastest
        let want3 = Matrix::from_row_slice(2, 4, &[0., 100., 10., 110., 1., 101., 11., 111.]);
        assert_eq!(x.unfold(3).unwrap(), want3);
    }

    #[test]
    fn bad_mode_and_shape() {
        let x = hundreds();
        assert!(matches!(x.unfold(0), Err(Error::Argument(_))));
        assert!(matches!(x.unfold(4), Err(Error::Argument(_))));
        let a = Matrix::<f64>::zeros(3, 4);
        assert!(Tensor3::fold(&a, 1, [2, 2, 2]).is_err());
        assert!(x.mode_product(&Matrix::zeros(2, 3), 2).is_err());
    }

    #[test]
    fn ones_row_sums_over_time() {
        let x = Tensor3::from_fn([2, 2, 3], |i, j, k| (i * 7 + j * 3) as f64 + (k * k) as f64 * 0.5);
        let ones = Matrix::from_element(1, 3, 1.0);
        let y = x.mode_product(&ones, 3).unwrap();
        assert_eq!(y.dims(), [2, 2, 1]);
        for i in 0..2 {
            for j in 0..2 {
                let brute: f64 = (0..3).map(|k| x.get(i, j, k)).sum();
                assert_eq!(y.get(i, j, 0), brute);
            }
        }
    }

    #[test]
    fn norm_examples() {
        assert_eq!(Tensor3::<f64>::zeros([2, 3, 4]).frobenius_norm(), 0.0);
        assert_eq!(Tensor3::from_vec([1, 1, 1], vec![3.0]).unwrap().frobenius_norm(), 3.0);
        let x = Tensor3::from_vec([2, 2, 1], vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(x.frobenius_norm(), 5.0);
    }

    #[test]
    fn rank_one_reconstruction() {
        let core = Tensor3::from_vec([1, 1, 1], vec![2.0]).unwrap();
        let a = Matrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let b = Matrix::from_column_slice(3, 1, &[0.5, 1.0, 2.0]);
        let d = Matrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let x = tucker_reconstruct(&core, &a, &b, &d).unwrap();
        for (i, j, k) in (0..2).flat_map(|i| (0..3).flat_map(move |j| (0..2).map(move |k| (i, j, k)))) {
            assert_eq!(x.get(i, j, k), 2.0 * a[i] * b[j] * d[k]);
        }
    }

    #[test]
    fn mttkrp_matches_unfolding_times_khatri_rao() {
        let x = Tensor3::from_fn([2, 3, 4], |i, j, k| (i as f64 - j as f64 * 0.5 + k as f64).cos());
        let u = [
            Matrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64 + 0.5),
            Matrix::from_fn(3, 2, |i, j| (i * j) as f64 - 1.0),
            Matrix::from_fn(4, 2, |i, j| (i as f64).sin() + j as f64),
        ];
        for n in 0..3 {
            let (a, b) = ((n + 1) % 3, (n + 2) % 3);
            // Khatri-Rao with mode a fastest, matching the cyclic unfolding
            let kr = Matrix::from_fn(u[a].nrows() * u[b].nrows(), 2, |row, q| {
                u[a][(row % u[a].nrows(), q)] * u[b][(row / u[a].nrows(), q)]
            });
            let want = x.unfold0(n) * kr;
            let got = mttkrp(&x, [&u[0], &u[1], &u[2]], n);
            assert!((got - want).abs().max() < 1e-12);
        }
        let rec = cp_reconstruct([&u[0], &u[1], &u[2]], Some(&[2.0, -1.0]));
        let brute = Tensor3::from_fn([2, 3, 4], |i, j, k| {
            (0..2).map(|q| [2.0, -1.0][q] * u[0][(i, q)] * u[1][(j, q)] * u[2][(k, q)]).sum::<f64>()
        });
        assert!((&rec - &brute).frobenius_norm() < 1e-12);
    }

    #[test]
    fn series_roundtrip_and_nonfinite() {
        let mut x = Tensor3::<f32>::zeros([2, 3, 4]);
        x.set_series(1, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.series(1, 2), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.get(1, 2, 3), 4.0);
        assert!(Tensor3::from_vec([1, 1, 2], vec![1.0, f64::NAN]).is_err());
    }
}
