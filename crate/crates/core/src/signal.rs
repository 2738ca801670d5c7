//! Preprocessing of raw recordings: trim the start-up transient, zero-phase
//! Butterworth band-pass, subsample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor3;

/// Drops the first `round(seconds * fs)` samples along time.
pub fn trim_head<T: Real>(x: &Tensor3<T>, fs: f64, seconds: f64) -> Result<Tensor3<T>> {
    if !(seconds >= 0.0) || !(fs > 0.0) {
        return Err(Error::arg("trim needs fs > 0 and seconds >= 0"));
    }
    let drop = (seconds * fs).round() as usize;
    let t = x.dims()[2];
    if drop >= t {
        return Err(Error::arg(format!("cannot trim {drop} samples from a recording of {t}")));
    }
    Ok(x.time_range(drop, t))
}

/// Keeps every `factor`-th sample along time; the new rate is `fs / factor`.
pub fn decimate<T: Real>(x: &Tensor3<T>, factor: usize) -> Result<Tensor3<T>> {
    if factor < 1 {
        return Err(Error::arg("decimation factor must be at least 1"));
    }
    let [m, n, t] = x.dims();
    let out_t = t / factor;
    let slab = m * n;
    let mut data = Vec::with_capacity(slab * out_t);
    for k in 0..out_t {
        let src = k * factor * slab;
        data.extend_from_slice(&x.data()[src..src + slab]);
    }
    Tensor3::from_vec([m, n, out_t], data)
}

/// Refuses a decimation whose new Nyquist frequency would not clear the
/// upper band edge `f_hi`.
pub fn check_decimation(fs: f64, factor: usize, f_hi: f64) -> Result<()> {
    let nyq = fs / (2.0 * factor as f64);
    if f_hi >= nyq {
        return Err(Error::Config(format!(
            "decimating by {factor} puts Nyquist at {nyq} Hz, below the {f_hi} Hz band edge"
        )));
    }
    Ok(())
}

/// Butterworth band-pass realised as a high-pass and a low-pass of the same
/// order in cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub order: usize,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    /// Forward-backward (zero phase) when true.
    pub bidirectional: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { order: 4, f_lo_hz: 0.05, f_hi_hz: 4.0, bidirectional: true }
    }
}

/// Second-order section, direct form II transposed, `a0` normalised to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn dc_gain(&self) -> T {
        (self.b[0] + self.b[1] + self.b[2]) / (T::one() + self.a[0] + self.a[1])
    }

    /// Largest pole modulus.
    fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0].as_f64(), self.a[1].as_f64());
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }

    /// Runs the section in place, starting from the steady state for a
    /// constant input equal to `xs[0]`.
    fn run(&self, xs: &mut [T]) {
        let Some(&x0) = xs.first() else { return };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let y0 = self.dc_gain() * x0;
        let mut z2 = b2 * x0 - a2 * y0;
        let mut z1 = b1 * x0 - a1 * y0 + z2;
        for v in xs.iter_mut() {
            let x = *v;
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            *v = y;
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Pass {
    Low,
    High,
}

/// Bilinear-transform Butterworth sections with the cutoff pre-warped, one
/// biquad per conjugate pole pair plus a first-order section for odd orders.
fn butterworth_sections<T: Real>(order: usize, fc: f64, fs: f64, pass: Pass) -> Vec<Biquad<T>> {
    let w0 = 2.0 * std::f64::consts::PI * fc / fs;
    let (sin, cos) = w0.sin_cos();
    let mut out = Vec::new();
    for k in 0..order / 2 {
        let q = 1.0 / (2.0 * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * order) as f64).sin());
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = match pass {
            Pass::Low => [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            Pass::High => [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
        };
        out.push(Biquad { b: b.map(|v| T::lit(v / a0)), a: [T::lit(-2.0 * cos / a0), T::lit((1.0 - alpha) / a0)] });
    }
    if order % 2 == 1 {
        let kk = (w0 / 2.0).tan();
        let a1 = (kk - 1.0) / (kk + 1.0);
        let b = match pass {
            Pass::Low => [kk / (1.0 + kk), kk / (1.0 + kk), 0.0],
            Pass::High => [1.0 / (1.0 + kk), -1.0 / (1.0 + kk), 0.0],
        };
        out.push(Biquad { b: b.map(T::lit), a: [T::lit(a1), T::zero()] });
    }
    out
}

/// Designed band-pass cascade for a given sample rate.
#[derive(Debug, Clone)]
pub struct BandpassFilter<T> {
    pub sections: Vec<Biquad<T>>,
    pub bidirectional: bool,
    pad: usize,
}

impl<T: Real> BandpassFilter<T> {
    pub fn design(spec: &FilterSpec, fs: f64) -> Result<Self> {
        let nyq = fs / 2.0;
        if spec.order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        if !(spec.f_lo_hz > 0.0 && spec.f_lo_hz < spec.f_hi_hz && spec.f_hi_hz < nyq) {
            return Err(Error::Config(format!(
                "band-pass needs 0 < f_lo < f_hi < fs/2, got {} / {} Hz at fs = {fs} Hz",
                spec.f_lo_hz, spec.f_hi_hz
            )));
        }
        // bilinear warping collapses the low-pass as f_hi nears Nyquist
        if spec.f_hi_hz > 0.95 * nyq {
            return Err(Error::Config(format!("upper cutoff {} Hz too close to Nyquist {nyq} Hz", spec.f_hi_hz)));
        }
        let mut sections = butterworth_sections(spec.order, spec.f_lo_hz, fs, Pass::High);
        sections.extend(butterworth_sections(spec.order, spec.f_hi_hz, fs, Pass::Low));
        let r = sections.iter().map(Biquad::pole_radius).fold(0.0, f64::max);
        if !(r < 1.0) {
            return Err(Error::Config("band-pass design is unstable at this sample rate".into()));
        }
        // samples for the slowest pole to decay by 1e-3
        let ir_len = ((1e-3f64).ln() / r.ln()).ceil().max(1.0) as usize;
        Ok(Self { sections, bidirectional: spec.bidirectional, pad: 3 * ir_len })
    }

    /// Single-pass magnitude response at `f_hz`, evaluated from the section
    /// coefficients.
    pub fn magnitude(&self, f_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        self.sections
            .iter()
            .map(|s| {
                let [b0, b1, b2] = s.b.map(|v| v.as_f64());
                let [a1, a2] = s.a.map(|v| v.as_f64());
                let num = (b0 + b1 * c1 + b2 * c2, b1 * s1 + b2 * s2);
                let den = (1.0 + a1 * c1 + a2 * c2, a1 * s1 + a2 * s2);
                (num.0.hypot(num.1)) / (den.0.hypot(den.1))
            })
            .product()
    }

    fn forward(&self, xs: &mut [T]) {
        for s in &self.sections {
            s.run(xs);
        }
    }

    /// Filters one series. Bidirectional filtering pads both ends with an
    /// odd reflection of three impulse-response lengths (capped by the
    /// series length), runs forward, reverses, runs again and crops.
    pub fn apply(&self, xs: &[T]) -> Vec<T> {
        if xs.is_empty() {
            return Vec::new();
        }
        if !self.bidirectional {
            let mut out = xs.to_vec();
            self.forward(&mut out);
            return out;
        }
        let n = xs.len();
        let pad = self.pad.min(n - 1);
        let two = T::lit(2.0);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| two * xs[0] - xs[i]));
        ext.extend_from_slice(xs);
        ext.extend((1..=pad).map(|i| two * xs[n - 1] - xs[n - 1 - i]));
        self.forward(&mut ext);
        ext.reverse();
        self.forward(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Band-passes each electrode series independently.
pub fn bandpass<T: Real>(x: &Tensor3<T>, fs: f64, spec: &FilterSpec) -> Result<Tensor3<T>> {
    let filter = BandpassFilter::<T>::design(spec, fs)?;
    let [m, n, _] = x.dims();
    let mut out = x.clone();
    for j in 0..n {
        for i in 0..m {
            out.set_series(i, j, &filter.apply(&x.series(i, j)));
        }
    }
    if !out.is_finite() {
        return Err(Error::num("band-pass produced non-finite samples"));
    }
    Ok(out)
}
