//! Tucker-structured engine.
//!
//! Mean field `q(U1) q(U2) q(U3) q(G) q(S) q(γ) q(λ) q(τ)`. Rows of each
//! factor share one `R_n × R_n` covariance `Ψ_n`; the core covariance is
//! restricted to `Σ_1 ⊗ Σ_2 ⊗ Σ_3`. Core entry `g_abc` has prior precision
//! `λ1_a λ2_b λ3_c`, so a column's precision shrinks both the factor column
//! and the matching core slice.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    check_input, gamma_log_prior, initial_noise_and_sparse, logdet_spd, noise_and_sparse_elbo, residual_energy, rms,
    update_sparse, DecompositionResult, GammaPost, Priors, RunOptions, LN_2PI,
};
use crate::baselines::rpca;
use crate::error::{Error, Result};
use crate::linalg::{hosvd, spd_inverse};
use crate::{Mat, Tensor};

/// Default rank caps when the caller gives none.
pub const DEFAULT_RANK_CAP: [usize; 3] = [4, 4, 32];

/// Variational posterior. Everything lives on the RMS-normalised scale
/// (`y / scale`).
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub factor_mean: [Mat; 3],
    /// Row covariance shared by all rows of factor `n`.
    pub factor_row_cov: [Mat; 3],
    pub core_mean: Tensor,
    /// Kronecker factors of the core covariance.
    pub core_cov: [Mat; 3],
    pub s_mean: Tensor,
    pub s_var: Tensor,
    /// Shape shared by every `q(γ_ijk)`.
    pub gamma_shape: f64,
    pub gamma_rate: Tensor,
    pub lambda: [Vec<GammaPost>; 3],
    pub tau: GammaPost,
    pub elbo_trace: Vec<f64>,
    pub prune_marks: Vec<usize>,
    pub scale: f64,
    /// `E[U_nᵀ U_n] = U_nᵀ U_n + I_n Ψ_n`.
    gram: [Mat; 3],
}

fn others(n: usize) -> [usize; 2] {
    [(n + 1) % 3, (n + 2) % 3]
}

/// Caps ranks at the mode sizes and at the product of the other two ranks
/// (a larger rank cannot be supported by the core unfolding).
pub fn effective_ranks(dims: [usize; 3], wanted: [usize; 3]) -> [usize; 3] {
    let mut r = [0; 3];
    for n in 0..3 {
        r[n] = wanted[n].min(dims[n]).max(1);
    }
    loop {
        let mut changed = false;
        for n in 0..3 {
            let [a, b] = others(n);
            let cap = r[a] * r[b];
            if r[n] > cap {
                r[n] = cap;
                changed = true;
            }
        }
        if !changed {
            return r;
        }
    }
}

impl PosteriorState {
    pub fn ranks(&self) -> [usize; 3] {
        [self.factor_mean[0].ncols(), self.factor_mean[1].ncols(), self.factor_mean[2].ncols()]
    }

    pub fn lambda_means(&self, n: usize) -> Vec<f64> {
        self.lambda[n].iter().map(GammaPost::mean).collect()
    }

    pub fn gamma_means(&self) -> Tensor {
        self.gamma_rate.map(|b| self.gamma_shape / b)
    }

    /// `E[X]` on the normalised scale.
    pub fn x_mean(&self) -> Tensor {
        let u = &self.factor_mean;
        self.core_mean.multi_mode_product([Some(&u[0]), Some(&u[1]), Some(&u[2])])
    }

    fn tr_cs(&self, n: usize) -> f64 {
        (&self.gram[n] * &self.core_cov[n]).trace()
    }

    fn tr_ds(&self, n: usize) -> f64 {
        self.lambda[n].iter().enumerate().map(|(r, l)| l.mean() * self.core_cov[n][(r, r)]).sum()
    }

    /// `E‖X‖²`.
    fn ex2(&self) -> f64 {
        let g = &self.gram;
        let z = self.core_mean.multi_mode_product([Some(&g[0]), Some(&g[1]), Some(&g[2])]);
        self.core_mean.dot(&z) + (0..3).map(|n| self.tr_cs(n)).product::<f64>()
    }

    fn refresh_gram(&mut self, n: usize, rows: usize) {
        let u = &self.factor_mean[n];
        self.gram[n] = u.transpose() * u + &self.factor_row_cov[n] * rows as f64;
    }

    /// Product over all core entries of the column precisions.
    fn core_precision(&self) -> Tensor {
        let l: Vec<Vec<f64>> = (0..3).map(|n| self.lambda_means(n)).collect();
        Tensor::from_fn(self.core_mean.dims(), |a, b, c| l[0][a] * l[1][b] * l[2][c])
    }

    fn check_dims(&self, y: &Tensor) -> Result<()> {
        let d = y.dims();
        for n in 0..3 {
            if self.factor_mean[n].nrows() != d[n] {
                return Err(Error::arg(format!(
                    "state expects mode {} of size {}, tensor has {}",
                    n + 1,
                    self.factor_mean[n].nrows(),
                    d[n]
                )));
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over every factor-row and core covariance factor.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.factor_row_cov
            .iter()
            .chain(self.core_cov.iter())
            .map(crate::linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Truncated HOSVD factors of `target` plus Gaussian jitter of standard
/// deviation `jitter_sd`, and the least-squares core for those factors.
fn hosvd_start(target: &Tensor, ranks: [usize; 3], jitter_sd: f64, rng: &mut ChaCha8Rng) -> Result<([Mat; 3], Tensor)> {
    let dims = target.dims();
    let jitter = Normal::new(0.0, jitter_sd.max(0.0)).map_err(|e| Error::arg(e.to_string()))?;
    let zero_input = target.sum_squares() == 0.0;
    let (_, bases) = hosvd(target, ranks)?;
    let factor_mean: [Mat; 3] = std::array::from_fn(|n| {
        let base = if zero_input { Mat::zeros(dims[n], ranks[n]) } else { bases[n].clone() };
        base.map(|v| v + jitter.sample(rng))
    });
    let pinv: Vec<Mat> = factor_mean
        .iter()
        .map(|u| {
            let g = u.transpose() * u;
            match g.clone().cholesky() {
                Some(c) => c.solve(&u.transpose()),
                None => Mat::zeros(u.ncols(), u.nrows()),
            }
        })
        .collect();
    let core_mean = target.multi_mode_product([Some(&pinv[0]), Some(&pinv[1]), Some(&pinv[2])]);
    Ok((factor_mean, core_mean))
}

/// HOSVD initialisation with seeded jitter on the factors.
pub fn initialize(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<PosteriorState> {
    check_input(y)?;
    priors.validate()?;
    opts.validate()?;
    let dims = y.dims();
    let wanted = match opts.init_rank {
        Some(r) => {
            for n in 0..3 {
                if r[n] == 0 {
                    return Err(Error::arg(format!("init rank along mode {} must be at least 1", n + 1)));
                }
            }
            r
        }
        None => DEFAULT_RANK_CAP,
    };
    let ranks = effective_ranks(dims, wanted);
    if ranks != wanted {
        debug!("initial ranks {wanted:?} reduced to {ranks:?}");
    }

    let scale = match rms(y) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let yn = y.scale(1.0 / scale);
    let n_total = yn.len() as f64;
    let mean = yn.data().iter().sum::<f64>() / n_total;
    let sd = (yn.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_total).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (factor_mean, core_mean) = hosvd_start(&yn, ranks, opts.jitter * sd, &mut rng)?;

    let core_ms = core_mean.sum_squares() / core_mean.len() as f64;
    let c = (1e-2 * core_ms.sqrt()).max(1e-12).powf(2.0 / 3.0);
    let factor_row_cov: [Mat; 3] = std::array::from_fn(|n| Mat::identity(ranks[n], ranks[n]) * 1e-4);
    let core_cov: [Mat; 3] = std::array::from_fn(|n| Mat::identity(ranks[n], ranks[n]) * c);

    let (tau, gamma_shape, gamma_rate, s_var) = initial_noise_and_sparse(&yn, priors);
    let lambda = std::array::from_fn(|n| vec![GammaPost { shape: priors.a_lambda, rate: priors.b_lambda }; ranks[n]]);

    let mut st = PosteriorState {
        gram: std::array::from_fn(|n| Mat::zeros(ranks[n], ranks[n])),
        factor_mean,
        factor_row_cov,
        core_mean,
        core_cov,
        s_mean: Tensor::zeros(dims),
        s_var,
        gamma_shape,
        gamma_rate,
        lambda,
        tau,
        elbo_trace: Vec::new(),
        prune_marks: Vec::new(),
        scale,
    };
    for n in 0..3 {
        st.refresh_gram(n, dims[n]);
    }
    Ok(st)
}

fn update_factor(st: &mut PosteriorState, n: usize, target: &Tensor, dims: [usize; 3]) -> Result<()> {
    let [a, b] = others(n);
    let tau = st.tau.mean();
    let mut ut: [Option<Mat>; 3] = [None, None, None];
    ut[a] = Some(st.factor_mean[a].transpose());
    ut[b] = Some(st.factor_mean[b].transpose());
    let w = target.multi_mode_product([ut[0].as_ref(), ut[1].as_ref(), ut[2].as_ref()]);
    let mut cs: [Option<&Mat>; 3] = [None, None, None];
    cs[a] = Some(&st.gram[a]);
    cs[b] = Some(&st.gram[b]);
    let z = st.core_mean.multi_mode_product(cs);

    let mn = st.core_mean.unfold0(n);
    let q = &mn * z.unfold0(n).transpose() + &st.core_cov[n] * (st.tr_cs(a) * st.tr_cs(b));
    let mut p = q * tau;
    for (r, l) in st.lambda[n].iter().enumerate() {
        p[(r, r)] += l.mean();
    }
    let (psi, _) = spd_inverse(&p).map_err(|e| Error::num(format!("factor {} covariance: {e}", n + 1)))?;
    st.factor_mean[n] = (w.unfold0(n) * mn.transpose() * &psi) * tau;
    st.factor_row_cov[n] = psi;
    st.refresh_gram(n, dims[n]);
    Ok(())
}

/// Preconditioned conjugate gradients for the core mean, warm-started at the
/// current mean. Each CG step lowers the quadratic objective, so the update
/// never decreases the ELBO even when stopped early.
fn update_core_mean(st: &mut PosteriorState, target: &Tensor) {
    let tau = st.tau.mean();
    let u = &st.factor_mean;
    let (u0, u1, u2) = (u[0].transpose(), u[1].transpose(), u[2].transpose());
    let rhs = target.multi_mode_product([Some(&u0), Some(&u1), Some(&u2)]).scale(tau);
    let lp = st.core_precision();
    let dims = st.core_mean.dims();
    let g = &st.gram;
    let apply = |m: &Tensor| -> Tensor {
        let z = m.multi_mode_product([Some(&g[0]), Some(&g[1]), Some(&g[2])]);
        z.zip_map(&lp.zip_map(m, |l, v| l * v), |zv, lv| tau * zv + lv)
    };
    let diag = Tensor::from_fn(dims, |i, j, k| tau * g[0][(i, i)] * g[1][(j, j)] * g[2][(k, k)] + lp.get(i, j, k));

    let mut x = st.core_mean.clone();
    let mut r = &rhs - &apply(&x);
    let rhs_norm = rhs.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut z = r.zip_map(&diag, |a, d| a / d);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let max_iter = 10 * x.len() + 10;
    for _ in 0..max_iter {
        if r.frobenius_norm() <= 1e-13 * rhs_norm {
            break;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x = x.zip_map(&p, |a, b| a + alpha * b);
        r = r.zip_map(&ap, |a, b| a - alpha * b);
        z = r.zip_map(&diag, |a, d| a / d);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.zip_map(&p, |a, b| a + beta * b);
    }
    st.core_mean = x;
}

fn update_core_cov(st: &mut PosteriorState) -> Result<()> {
    let tau = st.tau.mean();
    let r = st.ranks();
    let total = (r[0] * r[1] * r[2]) as f64;
    for n in 0..3 {
        let [a, b] = others(n);
        let alpha = st.tr_cs(a) * st.tr_cs(b);
        let beta = st.tr_ds(a) * st.tr_ds(b);
        let mut p = &st.gram[n] * (tau * alpha);
        for (i, l) in st.lambda[n].iter().enumerate() {
            p[(i, i)] += beta * l.mean();
        }
        let (inv, _) = spd_inverse(&p).map_err(|e| Error::num(format!("core covariance factor {}: {e}", n + 1)))?;
        st.core_cov[n] = inv * (total / r[n] as f64);
    }
    Ok(())
}

fn update_lambda(st: &mut PosteriorState, dims: [usize; 3], priors: &Priors) {
    let r = st.ranks();
    let total = (r[0] * r[1] * r[2]) as f64;
    for n in 0..3 {
        let [a, b] = others(n);
        let la = st.lambda_means(a);
        let lb = st.lambda_means(b);
        let mut core = vec![0.0; r[n]];
        let m = &st.core_mean;
        for k in 0..r[2] {
            for j in 0..r[1] {
                for i in 0..r[0] {
                    let idx = [i, j, k];
                    let v = m.get(i, j, k);
                    core[idx[n]] += v * v * la[idx[a]] * lb[idx[b]];
                }
            }
        }
        let cross = st.tr_ds(a) * st.tr_ds(b);
        let shape = priors.a_lambda + 0.5 * (dims[n] as f64 + total / r[n] as f64);
        st.lambda[n] = (0..r[n])
            .map(|c| GammaPost {
                shape,
                rate: priors.b_lambda + 0.5 * (st.gram[n][(c, c)] + core[c] + st.core_cov[n][(c, c)] * cross),
            })
            .collect();
    }
}

/// `E‖Y - X - S‖²` on the normalised scale.
fn expected_sq_error(st: &PosteriorState, yn: &Tensor, x: &Tensor) -> f64 {
    residual_energy(yn, x, &st.s_mean, &st.s_var) + (st.ex2() - x.sum_squares()).max(0.0)
}

fn normalised(st: &PosteriorState, y: &Tensor) -> Tensor {
    y.scale(1.0 / st.scale)
}

/// One cycle of coordinate updates: factors 1-3, core, `S`, `γ`, `λ`, `τ`.
pub fn vb_sweep(st: &mut PosteriorState, y: &Tensor, priors: &Priors) -> Result<()> {
    st.check_dims(y)?;
    let dims = y.dims();
    let yn = normalised(st, y);
    let target = &yn - &st.s_mean;
    for n in 0..3 {
        update_factor(st, n, &target, dims)?;
    }
    update_core_mean(st, &target);
    update_core_cov(st)?;
    let x = st.x_mean();
    let (sm, sv, rate) = update_sparse(&yn, &x, st.tau.mean(), st.gamma_shape, &st.gamma_rate, priors.b_gamma);
    st.s_mean = sm;
    st.s_var = sv;
    st.gamma_rate = rate;
    update_lambda(st, dims, priors);
    let err = expected_sq_error(st, &yn, &x);
    st.tau = GammaPost { shape: priors.a_tau + 0.5 * yn.len() as f64, rate: priors.b_tau + 0.5 * err };
    if !st.tau.mean().is_finite() || !st.core_mean.is_finite() {
        return Err(Error::num("non-finite posterior moments after a sweep"));
    }
    Ok(())
}

/// Evidence lower bound for the original (unnormalised) data.
pub fn elbo(st: &PosteriorState, y: &Tensor, priors: &Priors) -> Result<f64> {
    st.check_dims(y)?;
    let yn = normalised(st, y);
    let x = st.x_mean();
    let dims = y.dims();
    let n_total = yn.len() as f64;
    let ln2pie = LN_2PI + 1.0;

    let sq_err = expected_sq_error(st, &yn, &x);
    let mut e = noise_and_sparse_elbo(&st.tau, sq_err, &st.s_mean, &st.s_var, st.gamma_shape, &st.gamma_rate, priors);

    let r = st.ranks();
    let el: Vec<Vec<f64>> = (0..3).map(|n| st.lambda[n].iter().map(GammaPost::ln_mean).collect()).collect();
    for n in 0..3 {
        for (c, l) in st.lambda[n].iter().enumerate() {
            e += dims[n] as f64 * 0.5 * (el[n][c] - LN_2PI) - 0.5 * l.mean() * st.gram[n][(c, c)];
            e += gamma_log_prior(priors.a_lambda, priors.b_lambda, l.mean(), el[n][c]) + l.entropy();
        }
        e += dims[n] as f64 * 0.5 * (r[n] as f64 * ln2pie + logdet_spd(&st.factor_row_cov[n]));
    }

    let total = (r[0] * r[1] * r[2]) as f64;
    let lp = st.core_precision();
    let mut lsum = 0.0;
    for k in 0..r[2] {
        for j in 0..r[1] {
            for i in 0..r[0] {
                lsum += 0.5 * (el[0][i] + el[1][j] + el[2][k] - LN_2PI);
            }
        }
    }
    let quad = lp.zip_map(&st.core_mean, |l, m| l * m * m).data().iter().sum::<f64>()
        + (0..3).map(|n| st.tr_ds(n)).product::<f64>();
    e += lsum - 0.5 * quad;
    e += 0.5 * (total * ln2pie + (0..3).map(|n| total / r[n] as f64 * logdet_spd(&st.core_cov[n])).sum::<f64>());

    // change of variables back to the data scale
    e -= n_total * st.scale.ln();
    if !e.is_finite() {
        return Err(Error::num("ELBO is not finite"));
    }
    Ok(e)
}

/// Energy `‖X_r‖²` of the part of `E[X]` carried by column `r` of mode `n`.
fn column_energies(st: &PosteriorState, n: usize) -> Vec<f64> {
    let [a, b] = others(n);
    let mut us: [Option<&Mat>; 3] = [None, None, None];
    us[a] = Some(&st.factor_mean[a]);
    us[b] = Some(&st.factor_mean[b]);
    let part = st.core_mean.multi_mode_product(us).unfold0(n);
    let u = &st.factor_mean[n];
    (0..u.ncols()).map(|r| u.column(r).norm_squared() * part.row(r).norm_squared()).collect()
}

/// Drops columns whose ARD precision exceeds `threshold` times the smallest
/// precision of their mode, or whose share of `E[X]` carries less energy than one entry's
/// expected noise variance `1/E[τ]`. An infinite threshold disables pruning.
/// Returns whether anything was removed.
pub fn prune_ranks(st: &mut PosteriorState, threshold: f64) -> bool {
    if threshold.is_infinite() {
        return false;
    }
    let mut pruned = false;
    let floor = 1.0 / st.tau.mean();
    for n in 0..3 {
        let lam = st.lambda_means(n);
        let min = lam.iter().copied().fold(f64::INFINITY, f64::min);
        let energy = column_energies(st, n);
        let mut keep: Vec<usize> =
            (0..lam.len()).filter(|&r| lam[r] <= threshold * min && energy[r] >= floor).collect();
        if keep.len() == lam.len() {
            continue;
        }
        if keep.is_empty() {
            // keep the most relevant column, lowest index on ties
            let best = (0..lam.len()).fold(0, |b, r| if lam[r] < lam[b] { r } else { b });
            if lam.len() == 1 {
                continue;
            }
            warn!("every column of mode {} met the pruning rule; keeping one", n + 1);
            keep = vec![best];
        }
        debug!("mode {}: rank {} -> {}", n + 1, lam.len(), keep.len());
        pruned = true;
        let sub = |m: &Mat| Mat::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        st.factor_mean[n] = st.factor_mean[n].select_columns(&keep);
        st.factor_row_cov[n] = sub(&st.factor_row_cov[n]);
        st.core_cov[n] = sub(&st.core_cov[n]);
        st.gram[n] = sub(&st.gram[n]);
        st.lambda[n] = keep.iter().map(|&r| st.lambda[n][r]).collect();
        let mut d = st.core_mean.dims();
        d[n] = keep.len();
        let old = &st.core_mean;
        st.core_mean = Tensor::from_fn(d, |i, j, k| {
            let mut idx = [i, j, k];
            idx[n] = keep[idx[n]];
            old.get(idx[0], idx[1], idx[2])
        });
    }
    pruned
}

fn to_result(st: &PosteriorState, y: &Tensor, iterations: usize, converged: bool) -> DecompositionResult {
    let s = st.s_mean.scale(st.scale);
    let x = st.x_mean().scale(st.scale);
    let e = &(y - &s) - &x;
    DecompositionResult {
        s,
        x,
        e,
        multilinear_rank: st.ranks(),
        noise_precision: st.tau.mean() / (st.scale * st.scale),
        elbo_trace: st.elbo_trace.clone(),
        prune_marks: st.prune_marks.clone(),
        iterations,
        converged,
    }
}

/// Robust alternative to the plain start. A principal component pursuit
/// flags entries that the low-rank part cannot explain; those larger than
/// three initial noise deviations start in `E[S]` and the HOSVD factors are
/// taken from what remains.
fn robust_start(plain: &PosteriorState, y: &Tensor, opts: &RunOptions) -> Result<PosteriorState> {
    let yn = normalised(plain, y);
    let dims = yn.dims();
    let [m, n, t] = dims;
    let lambda = 1.0 / ((m * n).max(t) as f64).sqrt();
    let flagged = rpca(&yn, lambda, 1e-7, 200)?.localized;
    let cut = 3.0 / plain.tau.mean().sqrt();
    let s0 = flagged.map(|v| if v.abs() > cut { v } else { 0.0 });
    let target = &yn - &s0;
    let mut st = plain.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (u, core) = hosvd_start(&target, plain.ranks(), opts.jitter * std_dev(&yn), &mut rng)?;
    st.factor_mean = u;
    st.core_mean = core;
    for q in 0..3 {
        st.refresh_gram(q, dims[q]);
    }
    st.s_mean = s0;
    Ok(st)
}

fn std_dev(x: &Tensor) -> f64 {
    let n = x.len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    (x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Sweeps and prunes from `st` until convergence. Returns the sweep count
/// and whether the tolerance was met.
fn iterate(st: &mut PosteriorState, y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<(usize, bool)> {
    let mut prev = &st.x_mean() + &st.s_mean;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let fail = |e: Error| match e {
            Error::Numerical(msg) => Error::num(format!("sweep {iterations}: {msg}")),
            other => other,
        };
        vb_sweep(st, y, priors).map_err(fail)?;
        let value = elbo(st, y, priors).map_err(fail)?;
        st.elbo_trace.push(value);
        let cur = &st.x_mean() + &st.s_mean;
        let change = (&cur - &prev).frobenius_norm() / prev.frobenius_norm().max(f64::MIN_POSITIVE);
        if prune_ranks(st, opts.prune_threshold) {
            st.prune_marks.push(st.elbo_trace.len() - 1);
            prev = &st.x_mean() + &st.s_mean;
        } else if change < opts.tol {
            return Ok((iterations, true));
        } else {
            prev = cur;
        }
    }
    Ok((iterations, false))
}

/// Runs sweeps and pruning until the relative change of `E[S + X]` drops
/// below `opts.tol` or `opts.max_iters` sweeps have run.
pub fn run(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<DecompositionResult> {
    run_detailed(y, priors, opts).map(|(r, _)| r)
}

/// As [`run`], also returning the final posterior.
///
/// Two starts are run and the one with the higher bound is kept: the HOSVD
/// start of [`initialize`] and a robust start built from a principal
/// component pursuit. From the HOSVD start alone, spare components can fit
/// isolated spikes and the sweeps rarely move them back into `S`. The bounds
/// are compared after equal sweep counts, since a converged mean can still
/// carry a noise precision that keeps rising with further sweeps.
pub fn run_detailed(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<(DecompositionResult, PosteriorState)> {
    let mut st = initialize(y, priors, opts)?;
    if y.sum_squares() == 0.0 {
        let res = DecompositionResult::zeros(y, st.ranks(), st.tau.mean());
        return Ok((res, st));
    }
    let robust = robust_start(&st, y, opts);
    let (iterations, converged) = iterate(&mut st, y, priors, opts)?;
    let mut best = (st, iterations, converged);
    let mut alt = match robust {
        Ok(alt) => alt,
        Err(e) => {
            debug!("robust start skipped: {e}");
            let (st, iterations, converged) = best;
            return Ok((to_result(&st, y, iterations, converged), st));
        }
    };
    let outcome = iterate(&mut alt, y, priors, opts).and_then(|(i, c)| {
        let sweeps = best.1.max(i);
        extend(&mut best.0, y, priors, opts, sweeps)?;
        extend(&mut alt, y, priors, opts, sweeps)?;
        Ok((i, c, sweeps))
    });
    match outcome {
        Ok((_, c, sweeps)) => {
            let last = |s: &PosteriorState| s.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            debug!("plain start bound {}, robust start bound {}", last(&best.0), last(&alt));
            best.1 = sweeps;
            if last(&alt) > last(&best.0) {
                best = (alt, sweeps, c);
            }
        }
        Err(e) => debug!("robust start failed: {e}"),
    }
    let (st, iterations, converged) = best;
    Ok((to_result(&st, y, iterations, converged), st))
}

/// Continues sweeping and pruning until `sweeps` bounds are on the trace.
fn extend(st: &mut PosteriorState, y: &Tensor, priors: &Priors, opts: &RunOptions, sweeps: usize) -> Result<()> {
    while st.elbo_trace.len() < sweeps {
        vb_sweep(st, y, priors)?;
        st.elbo_trace.push(elbo(st, y, priors)?);
        if prune_ranks(st, opts.prune_threshold) {
            st.prune_marks.push(st.elbo_trace.len() - 1);
        }
    }
    Ok(())
}
