//! CP-structured engine (Bayesian robust CP factorisation).
//!
//! Same sparse and noise model as the Tucker engine, but `X` is a sum of
//! `R` rank-one terms. The three factor matrices share one ARD precision per
//! component, and rows of each factor share one `R × R` covariance.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    check_input, gamma_log_prior, initial_noise_and_sparse, logdet_spd, noise_and_sparse_elbo, residual_energy, rms,
    update_sparse, DecompositionResult, GammaPost, Priors, RunOptions, LN_2PI,
};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, svd};
use crate::tensor::{cp_reconstruct, mttkrp};
use crate::{Mat, Tensor};

/// Variational posterior of the CP engine, on the RMS-normalised scale.
#[derive(Debug, Clone)]
pub struct CpState {
    pub factor_mean: [Mat; 3],
    pub factor_row_cov: [Mat; 3],
    pub s_mean: Tensor,
    pub s_var: Tensor,
    pub gamma_shape: f64,
    pub gamma_rate: Tensor,
    pub lambda: Vec<GammaPost>,
    pub tau: GammaPost,
    pub elbo_trace: Vec<f64>,
    pub prune_marks: Vec<usize>,
    pub scale: f64,
    gram: [Mat; 3],
}

impl CpState {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn x_mean(&self) -> Tensor {
        let u = &self.factor_mean;
        cp_reconstruct([&u[0], &u[1], &u[2]], None)
    }

    fn refresh_gram(&mut self, n: usize) {
        let u = &self.factor_mean[n];
        self.gram[n] = u.transpose() * u + &self.factor_row_cov[n] * u.nrows() as f64;
    }

    fn ex2(&self) -> f64 {
        self.gram[0].component_mul(&self.gram[1]).component_mul(&self.gram[2]).sum()
    }
}

pub fn initialize(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<CpState> {
    check_input(y)?;
    priors.validate()?;
    opts.validate()?;
    let dims = y.dims();
    let r = opts.cp_rank;
    let scale = match rms(y) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let yn = y.scale(1.0 / scale);
    let n_total = yn.len() as f64;
    let mean = yn.data().iter().sum::<f64>() / n_total;
    let sd = (yn.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_total).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let magnitude = (yn.frobenius_norm() / r as f64).cbrt();

    let mut factor_mean: [Mat; 3] = std::array::from_fn(|n| Mat::zeros(dims[n], r));
    for n in 0..3 {
        let left = svd(&yn.unfold0(n))?.u;
        let lead = left.ncols().min(r);
        let fill = 1.0 / (dims[n] as f64).sqrt();
        let mut u = Mat::from_fn(dims[n], r, |_, _| 0.0);
        for c in 0..r {
            for i in 0..dims[n] {
                u[(i, c)] = if c < lead { left[(i, c)] } else { fill * std_normal.sample(&mut rng) };
            }
        }
        let jitter = opts.jitter * sd / (dims[n] as f64).sqrt();
        factor_mean[n] = u.map(|v| magnitude * v + jitter * std_normal.sample(&mut rng));
    }
    let factor_row_cov: [Mat; 3] = std::array::from_fn(|_| Mat::identity(r, r) * 1e-4);
    let (tau, gamma_shape, gamma_rate, s_var) = initial_noise_and_sparse(&yn, priors);
    let mut st = CpState {
        gram: std::array::from_fn(|_| Mat::zeros(r, r)),
        factor_mean,
        factor_row_cov,
        s_mean: Tensor::zeros(dims),
        s_var,
        gamma_shape,
        gamma_rate,
        lambda: vec![GammaPost { shape: priors.a_lambda, rate: priors.b_lambda }; r],
        tau,
        elbo_trace: Vec::new(),
        prune_marks: Vec::new(),
        scale,
    };
    for n in 0..3 {
        st.refresh_gram(n);
    }
    Ok(st)
}

fn expected_sq_error(st: &CpState, yn: &Tensor, x: &Tensor) -> f64 {
    residual_energy(yn, x, &st.s_mean, &st.s_var) + (st.ex2() - x.sum_squares()).max(0.0)
}

/// Factors 1-3, `S`, `γ`, `λ`, `τ`.
pub fn sweep(st: &mut CpState, y: &Tensor, priors: &Priors) -> Result<()> {
    if st.s_mean.dims() != y.dims() {
        return Err(Error::arg("state and tensor dims differ"));
    }
    let yn = y.scale(1.0 / st.scale);
    let target = &yn - &st.s_mean;
    let tau = st.tau.mean();
    for n in 0..3 {
        let (a, b) = ((n + 1) % 3, (n + 2) % 3);
        let mut p = st.gram[a].component_mul(&st.gram[b]) * tau;
        for (r, l) in st.lambda.iter().enumerate() {
            p[(r, r)] += l.mean();
        }
        let (psi, _) = spd_inverse(&p).map_err(|e| Error::num(format!("CP factor {} covariance: {e}", n + 1)))?;
        let u = &st.factor_mean;
        let w = mttkrp(&target, [&u[0], &u[1], &u[2]], n);
        st.factor_mean[n] = (w * &psi) * tau;
        st.factor_row_cov[n] = psi;
        st.refresh_gram(n);
    }
    let x = st.x_mean();
    let (sm, sv, rate) = update_sparse(&yn, &x, tau, st.gamma_shape, &st.gamma_rate, priors.b_gamma);
    st.s_mean = sm;
    st.s_var = sv;
    st.gamma_rate = rate;
    let dims = y.dims();
    let shape = priors.a_lambda + 0.5 * (dims[0] + dims[1] + dims[2]) as f64;
    st.lambda = (0..st.rank())
        .map(|r| GammaPost { shape, rate: priors.b_lambda + 0.5 * (0..3).map(|n| st.gram[n][(r, r)]).sum::<f64>() })
        .collect();
    let err = expected_sq_error(st, &yn, &x);
    st.tau = GammaPost { shape: priors.a_tau + 0.5 * yn.len() as f64, rate: priors.b_tau + 0.5 * err };
    if !st.tau.mean().is_finite() {
        return Err(Error::num("non-finite noise precision after a sweep"));
    }
    Ok(())
}

pub fn elbo(st: &CpState, y: &Tensor, priors: &Priors) -> Result<f64> {
    let yn = y.scale(1.0 / st.scale);
    let x = st.x_mean();
    let sq_err = expected_sq_error(st, &yn, &x);
    let mut e = noise_and_sparse_elbo(&st.tau, sq_err, &st.s_mean, &st.s_var, st.gamma_shape, &st.gamma_rate, priors);
    let dims = y.dims();
    let r = st.rank() as f64;
    for (c, l) in st.lambda.iter().enumerate() {
        let (el, lm) = (l.ln_mean(), l.mean());
        for n in 0..3 {
            e += dims[n] as f64 * 0.5 * (el - LN_2PI) - 0.5 * lm * st.gram[n][(c, c)];
        }
        e += gamma_log_prior(priors.a_lambda, priors.b_lambda, lm, el) + l.entropy();
    }
    for n in 0..3 {
        e += dims[n] as f64 * 0.5 * (r * (LN_2PI + 1.0) + logdet_spd(&st.factor_row_cov[n]));
    }
    e -= yn.len() as f64 * st.scale.ln();
    if !e.is_finite() {
        return Err(Error::num("ELBO is not finite"));
    }
    Ok(e)
}

/// Same rule as the Tucker engine: relative ARD precision above `threshold`
/// or component energy below one entry's noise variance.
pub fn prune(st: &mut CpState, threshold: f64) -> bool {
    if threshold.is_infinite() || st.rank() <= 1 {
        return false;
    }
    let lam: Vec<f64> = st.lambda.iter().map(GammaPost::mean).collect();
    let min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = 1.0 / st.tau.mean();
    let energy = |r: usize| (0..3).map(|n| st.factor_mean[n].column(r).norm_squared()).product::<f64>();
    let mut keep: Vec<usize> = (0..lam.len()).filter(|&r| lam[r] <= threshold * min && energy(r) >= floor).collect();
    if keep.len() == lam.len() {
        return false;
    }
    if keep.is_empty() {
        warn!("every CP component met the pruning rule; keeping one");
        keep = vec![(0..lam.len()).fold(0, |b, r| if lam[r] < lam[b] { r } else { b })];
    }
    debug!("CP rank {} -> {}", lam.len(), keep.len());
    let sub = |m: &Mat| Mat::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    for n in 0..3 {
        st.factor_mean[n] = st.factor_mean[n].select_columns(&keep);
        st.factor_row_cov[n] = sub(&st.factor_row_cov[n]);
        st.gram[n] = sub(&st.gram[n]);
    }
    st.lambda = keep.iter().map(|&r| st.lambda[r]).collect();
    true
}

pub fn run_detailed(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<(DecompositionResult, CpState)> {
    let mut st = initialize(y, priors, opts)?;
    if y.sum_squares() == 0.0 {
        let r = st.rank();
        return Ok((DecompositionResult::zeros(y, [r, r, r], st.tau.mean()), st));
    }
    let mut prev = &st.x_mean() + &st.s_mean;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let fail = |e: Error| match e {
            Error::Numerical(msg) => Error::num(format!("sweep {iterations}: {msg}")),
            other => other,
        };
        if it == 0 {
            // same two-start scheme as the Tucker engine
            let mut alt = st.clone();
            alt.s_mean = y.scale(1.0 / alt.scale);
            for n in 0..3 {
                alt.factor_mean[n] *= 0.1;
                alt.refresh_gram(n);
            }
            sweep(&mut st, y, priors).map_err(fail)?;
            let value = elbo(&st, y, priors).map_err(fail)?;
            let alt_value = sweep(&mut alt, y, priors).and_then(|_| elbo(&alt, y, priors));
            match alt_value {
                Ok(v) if v > value => {
                    debug!("sparse start wins ({v} > {value})");
                    prev = y.scale(1.0 / st.scale);
                    st = alt;
                    st.elbo_trace.push(v);
                }
                _ => st.elbo_trace.push(value),
            }
        } else {
            sweep(&mut st, y, priors).map_err(fail)?;
            let value = elbo(&st, y, priors).map_err(fail)?;
            st.elbo_trace.push(value);
        }
        let cur = &st.x_mean() + &st.s_mean;
        let change = (&cur - &prev).frobenius_norm() / prev.frobenius_norm().max(f64::MIN_POSITIVE);
        if prune(&mut st, opts.prune_threshold) {
            st.prune_marks.push(st.elbo_trace.len() - 1);
            prev = &st.x_mean() + &st.s_mean;
        } else if change < opts.tol {
            converged = true;
            break;
        } else {
            prev = cur;
        }
    }
    let s = st.s_mean.scale(st.scale);
    let x = st.x_mean().scale(st.scale);
    let e = &(y - &s) - &x;
    let r = st.rank();
    let res = DecompositionResult {
        s,
        x,
        e,
        multilinear_rank: [r, r, r],
        noise_precision: st.tau.mean() / (st.scale * st.scale),
        elbo_trace: st.elbo_trace.clone(),
        prune_marks: st.prune_marks.clone(),
        iterations,
        converged,
    };
    Ok((res, st))
}

pub fn run(y: &Tensor, priors: &Priors, opts: &RunOptions) -> Result<DecompositionResult> {
    run_detailed(y, priors, opts).map(|(r, _)| r)
}
