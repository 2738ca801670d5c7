use std::f64::consts::SQRT_2;

use num_traits::Float;

use super::rpca::soft_threshold;
use super::BaselineOutput;
use crate::error::{Error, Result};
use crate::linalg::median;
use crate::scalar::Real;
use crate::tensor::Tensor3;

/// Detail-coefficient shrinkage rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Soft threshold at `σ̂ sqrt(2 ln T)`, `σ̂` the MAD estimate from the
    /// finest detail level.
    UniversalSoft,
    /// Soft threshold at a fixed value. Zero bypasses the transform.
    Fixed(f64),
}

/// Orthogonal 4-tap Daubechies filter bank with periodic boundary handling.
pub struct Daubechies4;

impl Daubechies4 {
    pub fn lowpass() -> [f64; 4] {
        let s3 = 3f64.sqrt();
        let d = 4.0 * SQRT_2;
        [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
    }

    fn highpass() -> [f64; 4] {
        let h = Self::lowpass();
        [h[3], -h[2], h[1], -h[0]]
    }

    /// One analysis level on an even-length signal.
    pub fn forward(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let (h, g) = (Self::lowpass(), Self::highpass());
        let half = n / 2;
        let mut a = vec![0.0; half];
        let mut d = vec![0.0; half];
        for i in 0..half {
            for k in 0..4 {
                let v = x[(2 * i + k) % n];
                a[i] += h[k] * v;
                d[i] += g[k] * v;
            }
        }
        (a, d)
    }

    /// Exact inverse of [`Daubechies4::forward`].
    pub fn inverse(a: &[f64], d: &[f64]) -> Vec<f64> {
        let half = a.len();
        let n = 2 * half;
        let (h, g) = (Self::lowpass(), Self::highpass());
        let mut x = vec![0.0; n];
        for i in 0..half {
            for k in 0..4 {
                x[(2 * i + k) % n] += h[k] * a[i] + g[k] * d[i];
            }
        }
        x
    }
}

fn denoise_series(x: &[f64], levels: usize, rule: ThresholdRule) -> Vec<f64> {
    let t = x.len();
    let block = 1usize << levels;
    let padded_len = t.div_ceil(block) * block;
    // symmetric (half-sample) extension to a multiple of 2^levels
    let mut buf: Vec<f64> = (0..padded_len)
        .map(|i| {
            let period = 2 * t;
            let r = i % period;
            if r < t {
                x[r]
            } else {
                x[period - 1 - r]
            }
        })
        .collect();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = Daubechies4::forward(&buf);
        details.push(d);
        buf = a;
    }
    let thr = match rule {
        ThresholdRule::Fixed(v) => v,
        ThresholdRule::UniversalSoft => {
            let mut finest: Vec<f64> = details[0].iter().map(|v| v.abs()).collect();
            median(&mut finest) / 0.674_489_750_196_081_7 * (2.0 * (t as f64).ln()).sqrt()
        }
    };
    for d in details.iter_mut() {
        for v in d.iter_mut() {
            *v = soft_threshold(*v, thr);
        }
    }
    for d in details.iter().rev() {
        buf = Daubechies4::inverse(&buf, d);
    }
    buf.truncate(t);
    buf
}

/// Per-electrode wavelet shrinkage. The denoised signal is the localized
/// estimate and the removed part the distributed one.
pub fn wavelet_denoise<T: Real>(y: &Tensor3<T>, levels: usize, rule: ThresholdRule) -> Result<BaselineOutput<T>> {
    let [m, n, t] = y.dims();
    if levels == 0 || levels >= usize::BITS as usize || t < (1usize << levels) {
        return Err(Error::arg(format!("{levels} wavelet levels need at least 2^{levels} samples, got {t}")));
    }
    if let ThresholdRule::Fixed(v) = rule {
        if !(v >= 0.0) {
            return Err(Error::arg("fixed wavelet threshold must be non-negative"));
        }
        if v == 0.0 {
            return Ok(BaselineOutput {
                localized: y.clone(),
                distributed: Tensor3::zeros(y.dims()),
                diagnostics: Default::default(),
            }
            .with("levels", levels)
            .with("bypassed", true));
        }
    }
    let mut localized = Tensor3::zeros(y.dims());
    for j in 0..n {
        for i in 0..m {
            let s: Vec<f64> = y.series(i, j).into_iter().map(Real::as_f64).collect();
            let d: Vec<T> = denoise_series(&s, levels, rule).into_iter().map(T::lit).collect();
            localized.set_series(i, j, &d);
        }
    }
    let distributed = y - &localized;
    if !Float::is_finite(localized.frobenius_norm()) {
        return Err(Error::num("wavelet shrinkage produced non-finite output"));
    }
    Ok(BaselineOutput { localized, distributed, diagnostics: Default::default() }.with("levels", levels))
}
