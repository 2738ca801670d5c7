use ehg_core::linalg::hosvd;
use ehg_core::{tucker_reconstruct, Mat, Tensor};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tensor_strategy(max: [usize; 3]) -> impl Strategy<Value = Tensor> {
    (1..=max[0], 1..=max[1], 1..=max[2]).prop_flat_map(|(m, n, t)| {
        prop::collection::vec(-1e3..1e3f64, m * n * t).prop_map(move |d| Tensor::from_vec([m, n, t], d).unwrap())
    })
}

fn matrix(rows: usize, cols: usize, vals: &[f64]) -> Mat {
    DMatrix::from_fn(rows, cols, |r, c| vals[(r * cols + c) % vals.len()] + 0.01 * (r + 2 * c) as f64)
}

/// `Σ_{pqr} g_pqr a_ip b_jq c_kr`, written out index by index.
fn tucker_brute(g: &Tensor, a: &Mat, b: &Mat, c: &Mat) -> Tensor {
    let [p, q, r] = g.dims();
    Tensor::from_fn([a.nrows(), b.nrows(), c.nrows()], |i, j, k| {
        let mut s = 0.0;
        for x in 0..p {
            for y in 0..q {
                for z in 0..r {
                    s += g.get(x, y, z) * a[(i, x)] * b[(j, y)] * c[(k, z)];
                }
            }
        }
        s
    })
}

fn max_rel(a: &Tensor, b: &Tensor) -> f64 {
    let scale = b.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold_bit_exact(x in tensor_strategy([8, 8, 64]), mode in 1usize..=3) {
        let a = x.unfold(mode).unwrap();
        let d = x.dims();
        prop_assert_eq!(a.nrows(), d[mode - 1]);
        prop_assert_eq!(a.ncols(), d[mode % 3] * d[(mode + 1) % 3]);
        let back = Tensor::fold(&a, mode, d).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn unfold_is_linear(x in tensor_strategy([4, 4, 16]), mode in 1usize..=3, c in -3.0..3.0f64) {
        let y = x.map(|v| v.sin() * c);
        let lhs = (&x + &y).unfold(mode).unwrap();
        let rhs = x.unfold(mode).unwrap() + y.unfold(mode).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn orthonormal_products_preserve_norm(
        x in tensor_strategy([5, 5, 12]),
        mode in 1usize..=3,
        seed in prop::collection::vec(-1.0..1.0f64, 16),
    ) {
        let size = x.dims()[mode - 1];
        let q = matrix(size, size, &seed).qr().q();
        let y = x.mode_product(&q, mode).unwrap();
        let (a, b) = (x.frobenius_norm(), y.frobenius_norm());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300), "{} vs {}", a, b);
    }

    #[test]
    fn mode_product_matches_unfolded_gemm(x in tensor_strategy([3, 3, 4]), mode in 1usize..=3, rows in 1usize..4,
                                         vals in prop::collection::vec(-2.0..2.0f64, 12)) {
        let u = matrix(rows, x.dims()[mode - 1], &vals);
        let got = x.mode_product(&u, mode).unwrap();
        let mut dims = x.dims();
        dims[mode - 1] = rows;
        let want = Tensor::fold(&(&u * x.unfold(mode).unwrap()), mode, dims).unwrap();
        prop_assert!(max_rel(&got, &want) <= 1e-12);
    }

    #[test]
    fn tucker_matches_brute_force(
        g in tensor_strategy([3, 3, 4]),
        dims in (1usize..=3, 1usize..=3, 1usize..=4),
        vals in prop::collection::vec(-2.0..2.0f64, 24),
    ) {
        let [p, q, r] = g.dims();
        let a = matrix(dims.0, p, &vals);
        let b = matrix(dims.1, q, &vals[5..]);
        let c = matrix(dims.2, r, &vals[11..]);
        let got = tucker_reconstruct(&g, &a, &b, &c).unwrap();
        prop_assert!(max_rel(&got, &tucker_brute(&g, &a, &b, &c)) <= 1e-12);
    }

    #[test]
    fn distinct_mode_products_commute(x in tensor_strategy([3, 4, 5]), vals in prop::collection::vec(-2.0..2.0f64, 20)) {
        let a = matrix(2, x.dims()[0], &vals);
        let b = matrix(3, x.dims()[1], &vals[3..]);
        let ab = x.mode_product(&a, 1).unwrap().mode_product(&b, 2).unwrap();
        let ba = x.mode_product(&b, 2).unwrap().mode_product(&a, 1).unwrap();
        prop_assert!(max_rel(&ab, &ba) <= 1e-12);
    }

    #[test]
    fn hosvd_residual_within_discarded_energy(x in tensor_strategy([4, 4, 10]), r in (1usize..=4, 1usize..=4, 1usize..=6)) {
        let d = x.dims();
        let ranks = [r.0.min(d[0]), r.1.min(d[1]), r.2.min(d[2])];
        let (core, us) = hosvd(&x, ranks).unwrap();
        let approx = tucker_reconstruct(&core, &us[0], &us[1], &us[2]).unwrap();
        let resid = (&x - &approx).sum_squares();
        let mut bound = 0.0;
        for (n, &rank) in ranks.iter().enumerate() {
            let s = x.unfold(n + 1).unwrap().singular_values();
            let mut s: Vec<f64> = s.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            bound += s.iter().skip(rank).map(|v| v * v).sum::<f64>();
        }
        prop_assert!(resid <= bound * (1.0 + 1e-9) + 1e-9 * x.sum_squares(), "{} > {}", resid, bound);
    }
}

#[test]
fn frobenius_examples() {
    assert_eq!(Tensor::zeros([2, 3, 4]).frobenius_norm(), 0.0);
    assert_eq!(Tensor::from_vec([1, 1, 1], vec![3.0]).unwrap().frobenius_norm(), 3.0);
    assert_eq!(Tensor::from_vec([2, 2, 1], vec![1.0, 2.0, 2.0, 4.0]).unwrap().frobenius_norm(), 5.0);
}

#[test]
fn degenerate_unfoldings() {
    let x = Tensor::from_vec([1, 1, 1], vec![5.0]).unwrap();
    for mode in 1..=3 {
        let a = x.unfold(mode).unwrap();
        assert_eq!((a.nrows(), a.ncols(), a[(0, 0)]), (1, 1, 5.0));
        assert_eq!(Tensor::fold(&a, mode, [1, 1, 1]).unwrap().data(), &[5.0]);
    }
    assert!(x.unfold(0).is_err() && x.unfold(4).is_err());
    assert!(Tensor::fold(&DMatrix::zeros(2, 3), 1, [2, 2, 2]).is_err());
}

#[test]
fn identity_factors_keep_core() {
    let g = Tensor::from_fn([2, 3, 4], |i, j, k| (i * 12 + j * 4 + k) as f64 - 7.5);
    let got =
        tucker_reconstruct(&g, &DMatrix::identity(2, 2), &DMatrix::identity(3, 3), &DMatrix::identity(4, 4)).unwrap();
    assert_eq!(got.data(), g.data());
    for mode in 1..=3 {
        let n = g.dims()[mode - 1];
        assert_eq!(g.mode_product(&DMatrix::identity(n, n), mode).unwrap().data(), g.data());
    }
    assert!(
        tucker_reconstruct(&g, &DMatrix::identity(3, 3), &DMatrix::identity(3, 3), &DMatrix::identity(4, 4)).is_err()
    );
}

#[test]
fn single_precision_matches_double() {
    let x64 = Tensor::from_fn([3, 2, 5], |i, j, k| (i as f64 - j as f64 * 0.5) * (k as f64 * 0.3).cos());
    let x32 = ehg_core::Tensor3::<f32>::from_fn([3, 2, 5], |i, j, k| x64.get(i, j, k) as f32);
    for mode in 1..=3 {
        let a = x64.unfold(mode).unwrap();
        let b = x32.unfold(mode).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - f64::from(*q)).abs() < 1e-6);
        }
    }
    assert!((x64.frobenius_norm() - f64::from(x32.frobenius_norm())).abs() < 1e-5);
}
