//! Variational Bayes robust tensor decomposition, `Y = S + X + E`.
//!
//! `X` is low rank (Tucker in [`tucker`], CP in [`cp`]), `S` is sparse
//! through per-entry precisions `γ_ijk`, and `E` is white noise with
//! precision `τ`. Factor columns carry ARD precisions `λ_r` that drive rank
//! selection. All updates are closed-form mean-field coordinate ascent.
//!
//! The engines work on the data divided by its root-mean-square value, so
//! the hyperpriors act on a fixed scale and the outputs are equivariant to
//! rescaling the input. Outputs and the reported noise precision are mapped
//! back to the original units.

pub mod cp;
pub mod tucker;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::linalg::median;
use crate::Tensor;

pub use tucker::{elbo, initialize, prune_ranks, run, run_detailed, vb_sweep, PosteriorState};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gamma hyperpriors (shape, rate) on the noise precision `τ`, the sparse
/// precisions `γ` and the column precisions `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl Default for Priors {
    /// Broad priors everywhere except `a_gamma = 4`, which keeps an entry
    /// in `S` only when its residual exceeds roughly 5.8 noise standard
    /// deviations.
    fn default() -> Self {
        Self { a_tau: 1e-6, b_tau: 1e-6, a_gamma: 4.0, b_gamma: 1e-6, a_lambda: 1e-6, b_lambda: 1e-6 }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a_tau, self.b_tau, self.a_gamma, self.b_gamma, self.a_lambda, self.b_lambda];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("all prior parameters must be positive and finite: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop when `‖ΔE[S + X]‖ / ‖E[S + X]‖` falls below this.
    pub tol: f64,
    /// Upper bounds on the Tucker ranks. `None` means the mode sizes capped
    /// at (4, 4, 32).
    pub init_rank: Option<[usize; 3]>,
    /// Initial number of CP components for the CP engine.
    pub cp_rank: usize,
    pub prune_threshold: f64,
    pub seed: u64,
    /// Standard deviation of the factor jitter relative to the data
    /// standard deviation.
    pub jitter: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-5, init_rank: None, cp_rank: 8, prune_threshold: 1e4, seed: 0, jitter: 1e-2 }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::arg("tol must be positive"));
        }
        if !(self.prune_threshold > 0.0) {
            return Err(Error::arg("prune threshold must be positive"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::arg("jitter must be finite and non-negative"));
        }
        if self.cp_rank == 0 {
            return Err(Error::arg("CP rank must be at least 1"));
        }
        Ok(())
    }
}

/// Gamma distribution in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPost {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPost {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_mean(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    pub fn entropy(&self) -> f64 {
        gamma_entropy(self.shape, self.rate)
    }
}

pub(crate) fn gamma_entropy(a: f64, b: f64) -> f64 {
    a - b.ln() + ln_gamma(a) + (1.0 - a) * digamma(a)
}

/// `E_q[ln Gamma(v | a0, b0)]` given `E[v]` and `E[ln v]`.
pub(crate) fn gamma_log_prior(a0: f64, b0: f64, e: f64, eln: f64) -> f64 {
    a0 * b0.ln() - ln_gamma(a0) + (a0 - 1.0) * eln - b0 * e
}

/// Output of a decomposition, in the units of the input.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionResult {
    #[serde(skip)]
    pub s: Tensor,
    #[serde(skip)]
    pub x: Tensor,
    /// `y - s - x`.
    #[serde(skip)]
    pub e: Tensor,
    pub multilinear_rank: [usize; 3],
    pub noise_precision: f64,
    pub elbo_trace: Vec<f64>,
    /// Trace indices after which columns were pruned; the ELBO step from
    /// such an index to the next is not a coordinate-ascent step.
    pub prune_marks: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl DecompositionResult {
    /// Largest relative ELBO decrease between consecutive entries that are
    /// not separated by a prune event. Zero for a monotone trace.
    pub fn worst_elbo_drop(&self) -> f64 {
        worst_drop(&self.elbo_trace, &self.prune_marks)
    }

    pub(crate) fn zeros(y: &Tensor, rank: [usize; 3], noise_precision: f64) -> Self {
        let z = Tensor::zeros(y.dims());
        Self {
            s: z.clone(),
            x: z.clone(),
            e: y.clone(),
            multilinear_rank: rank,
            noise_precision,
            elbo_trace: Vec::new(),
            prune_marks: Vec::new(),
            iterations: 1,
            converged: true,
        }
    }
}

/// Posterior of the sparse entries given `E[X]`:
/// `s = τ r / (τ + E[γ])`, `v = 1 / (τ + E[γ])`, then the rates of `q(γ)`.
pub(crate) fn update_sparse(
    yn: &Tensor,
    x: &Tensor,
    tau: f64,
    gamma_shape: f64,
    gamma_rate: &Tensor,
    b_gamma: f64,
) -> (Tensor, Tensor, Tensor) {
    let dims = yn.dims();
    let (mut s, mut v) = (Vec::with_capacity(yn.len()), Vec::with_capacity(yn.len()));
    for ((&y, &xv), &rate) in yn.data().iter().zip(x.data()).zip(gamma_rate.data()) {
        let prec = tau + gamma_shape / rate;
        s.push(tau * (y - xv) / prec);
        v.push(1.0 / prec);
    }
    let s = Tensor::from_vec(dims, s).expect("finite sparse mean");
    let v = Tensor::from_vec(dims, v).expect("finite sparse variance");
    let rate = s.zip_map(&v, |m, v| b_gamma + 0.5 * (m * m + v));
    (s, v, rate)
}

/// `‖Y - X - S‖² + Σ v` (the part of `E‖Y - X - S‖²` not involving the
/// spread of `X`).
pub(crate) fn residual_energy(yn: &Tensor, x: &Tensor, s_mean: &Tensor, s_var: &Tensor) -> f64 {
    let resid: f64 = yn.data().iter().zip(x.data()).zip(s_mean.data()).map(|((y, xv), s)| (y - xv - s).powi(2)).sum();
    resid + s_var.data().iter().sum::<f64>()
}

/// ELBO terms of the likelihood, `q(τ)`, `q(S)` and `q(γ)`.
pub(crate) fn noise_and_sparse_elbo(
    tau: &GammaPost,
    sq_err: f64,
    s_mean: &Tensor,
    s_var: &Tensor,
    gamma_shape: f64,
    gamma_rate: &Tensor,
    priors: &Priors,
) -> f64 {
    let n_total = s_mean.len() as f64;
    let (et, elt) = (tau.mean(), tau.ln_mean());
    let mut e = 0.5 * n_total * (elt - LN_2PI) - 0.5 * et * sq_err;
    e += gamma_log_prior(priors.a_tau, priors.b_tau, et, elt) + tau.entropy();
    let ga = gamma_shape;
    let dg = digamma(ga);
    // the Gamma entropy is a - ln b + ln Γ(a) + (1 - a) ψ(a)
    let ent_const = ga + ln_gamma(ga) + (1.0 - ga) * dg;
    for ((&m, &v), &b) in s_mean.data().iter().zip(s_var.data()).zip(gamma_rate.data()) {
        let eg = ga / b;
        let elg = dg - b.ln();
        e += 0.5 * (elg - LN_2PI) - 0.5 * eg * (m * m + v);
        e += gamma_log_prior(priors.a_gamma, priors.b_gamma, eg, elg);
        e += ent_const - b.ln();
        e += 0.5 * (LN_2PI + 1.0 + v.ln());
    }
    e
}

/// Initial noise precision and sparse-precision posteriors shared by both
/// engines: `E[τ]` from the robust noise estimate, `E[γ] = 1`.
pub(crate) fn initial_noise_and_sparse(yn: &Tensor, priors: &Priors) -> (GammaPost, f64, Tensor, Tensor) {
    let zero_input = yn.sum_squares() == 0.0;
    let noise_var = if zero_input { 1.0 } else { noise_variance_guess(yn) };
    let shape = priors.a_tau + 0.5 * yn.len() as f64;
    let tau = GammaPost { shape, rate: shape * noise_var };
    let gamma_shape = priors.a_gamma + 0.5;
    let gamma_rate = Tensor::from_fn(yn.dims(), |_, _, _| gamma_shape);
    let s_var = Tensor::from_fn(yn.dims(), |_, _, _| 1.0 / (tau.mean() + 1.0));
    (tau, gamma_shape, gamma_rate, s_var)
}

pub(crate) fn logdet_spd(m: &crate::Mat) -> f64 {
    match m.clone().cholesky() {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

pub(crate) fn worst_drop(trace: &[f64], marks: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..trace.len().saturating_sub(1) {
        if marks.contains(&k) {
            continue;
        }
        let drop = (trace[k] - trace[k + 1]) / trace[k].abs().max(f64::MIN_POSITIVE);
        worst = worst.max(drop);
    }
    worst
}

pub(crate) fn rms(y: &Tensor) -> f64 {
    (y.sum_squares() / y.len().max(1) as f64).sqrt()
}

/// Robust noise variance from first differences along time:
/// `(median |Δy| / √2 / 0.6745)²`, falling back to 1% of the mean square
/// when the differences vanish.
pub(crate) fn noise_variance_guess(y: &Tensor) -> f64 {
    let [m, n, t] = y.dims();
    let slab = m * n;
    let mut diffs: Vec<f64> = (slab..slab * t).map(|o| (y.data()[o] - y.data()[o - slab]).abs()).collect();
    let sigma = median(&mut diffs) / std::f64::consts::SQRT_2 / 0.674_489_750_196_081_7;
    let ms = y.sum_squares() / y.len().max(1) as f64;
    let var = sigma * sigma;
    if var > 1e-12 * ms && var.is_finite() {
        var
    } else {
        (1e-2 * ms).max(f64::MIN_POSITIVE)
    }
}

pub(crate) fn check_input(y: &Tensor) -> Result<()> {
    let [m, n, t] = y.dims();
    if m == 0 || n == 0 || t < 2 {
        return Err(Error::arg(format!("decomposition needs dims of at least (1, 1, 2), got {:?}", y.dims())));
    }
    if !y.is_finite() {
        return Err(Error::num("input tensor has non-finite entries"));
    }
    Ok(())
}
