use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Centre frequency (radians per unit scale) of the Morlet wavelet.
pub const MORLET_OMEGA0: f64 = 6.0;

/// Magnitude of the continuous wavelet transform on a log-spaced frequency
/// grid. `magnitudes[f][t]`.
#[derive(Debug, Clone, Serialize)]
pub struct Scalogram {
    pub freqs_hz: Vec<f64>,
    pub magnitudes: Vec<Vec<f64>>,
}

/// Analytic Morlet CWT computed in the frequency domain.
///
/// At frequency `f` the scale is `s = ω0 / (2π f)` and the wavelet spectrum
/// is `2 exp(-(s ω - ω0)² / 2)` for `ω > 0`, zero otherwise. The factor 2
/// makes a unit-amplitude sine at `f` map to magnitude ≈ 1 on its ridge.
/// The series is zero-padded to a power of two at least twice its length.
pub fn scalogram<T: Real>(series: &[T], fs: f64, f_min_hz: f64, f_max_hz: f64, n_freqs: usize) -> Result<Scalogram> {
    if !(f_min_hz > 0.0 && f_min_hz < f_max_hz && f_max_hz <= fs / 2.0) {
        return Err(Error::arg(format!(
            "scalogram band needs 0 < f_min < f_max <= fs/2, got {f_min_hz}..{f_max_hz} Hz at fs = {fs} Hz"
        )));
    }
    if n_freqs == 0 {
        return Err(Error::arg("scalogram needs at least one frequency"));
    }
    let freqs_hz: Vec<f64> = if n_freqs == 1 {
        vec![f_min_hz]
    } else {
        let ratio = (f_max_hz / f_min_hz).ln() / (n_freqs - 1) as f64;
        (0..n_freqs).map(|i| f_min_hz * (ratio * i as f64).exp()).collect()
    };
    let t = series.len();
    if t == 0 {
        return Ok(Scalogram { freqs_hz, magnitudes: vec![Vec::new(); n_freqs] });
    }
    let len = (2 * t).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut spec: Vec<Complex<f64>> = series.iter().map(|v| Complex::new(v.as_f64(), 0.0)).collect();
    spec.resize(len, Complex::new(0.0, 0.0));
    fwd.process(&mut spec);

    let mut magnitudes = Vec::with_capacity(n_freqs);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for &f in &freqs_hz {
        let scale = MORLET_OMEGA0 / (2.0 * PI * f);
        for (k, b) in buf.iter_mut().enumerate() {
            // positive angular frequencies occupy bins 1..len/2
            let w = if k > 0 && k < len / 2 { 2.0 * PI * fs * k as f64 / len as f64 } else { 0.0 };
            let psi = if w > 0.0 { 2.0 * (-0.5 * (scale * w - MORLET_OMEGA0).powi(2)).exp() } else { 0.0 };
            *b = spec[k] * psi;
        }
        inv.process(&mut buf);
        let norm = 1.0 / len as f64;
        magnitudes.push(buf[..t].iter().map(|c| c.norm() * norm).collect());
    }
    Ok(Scalogram { freqs_hz, magnitudes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(fs: f64, t: usize, parts: &[(f64, f64)]) -> Vec<f64> {
        (0..t).map(|k| parts.iter().map(|(f, a)| a * (2.0 * PI * f * k as f64 / fs).sin()).sum()).collect()
    }

    fn nearest(freqs: &[f64], f: f64) -> usize {
        (0..freqs.len())
            .min_by(|&a, &b| (freqs[a].ln() - f.ln()).abs().total_cmp(&(freqs[b].ln() - f.ln()).abs()))
            .unwrap()
    }

    #[test]
    fn ridge_follows_pure_tone() {
        let fs = 10.0;
        let x = tone(fs, 3000, &[(0.6, 1.0)]);
        let sc = scalogram(&x, fs, 0.05, 4.0, 60).unwrap();
        let want = nearest(&sc.freqs_hz, 0.6);
        for k in 300..2700 {
            let arg = (0..60).max_by(|&a, &b| sc.magnitudes[a][k].total_cmp(&sc.magnitudes[b][k])).unwrap();
            assert!(arg.abs_diff(want) <= 1, "t={k}: bin {arg} vs {want}");
        }
        let amp = sc.magnitudes[want][1500];
        assert!((amp - 1.0).abs() < 0.1, "{amp}");
    }

    #[test]
    fn zero_in_zero_out() {
        let sc = scalogram(&[0.0f64; 256], 10.0, 0.1, 4.0, 8).unwrap();
        assert!(sc.magnitudes.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_band() {
        assert!(scalogram(&[1.0f64; 16], 10.0, 0.0, 4.0, 8).is_err());
        assert!(scalogram(&[1.0f64; 16], 10.0, 1.0, 6.0, 8).is_err());
        assert!(scalogram(&[1.0f64; 16], 10.0, 2.0, 1.0, 8).is_err());
    }
}
