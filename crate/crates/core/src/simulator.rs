//! Synthetic EHG measurements with known localized, distributed and noise
//! components.
//!
//! The localized part is a propagating burst: a two-tone fast wave under a
//! Gaussian envelope, delayed row by row at the conduction speed. The
//! distributed part sums a slow wave (active while the burst crosses the
//! grid), a respiration tone whose amplitude falls linearly along the main
//! diagonal, and a weak cardiac tone. White Gaussian noise is scaled to a
//! target SNR.
//!
//! Noise is drawn from a ChaCha8 stream (`rand_chacha`, seeded through
//! `SeedableRng::seed_from_u64`) with `rand_distr::StandardNormal`, in storage
//! order, so outputs are portable across platforms.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{AnnotationSet, Interval, IntervalKind};
use crate::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstParams {
    pub fwl_freq_hz: f64,
    pub fwl_amp_mv: f64,
    pub fwh_freq_hz: f64,
    pub fwh_amp_mv: f64,
    pub duration_s: f64,
    pub peak_amp_mv: f64,
    /// Envelope standard deviation as a fraction of `duration_s`.
    pub envelope_sigma_fraction: f64,
    pub propagation_speed_m_per_s: f64,
    /// Burst start on the first electrode row. `None` centres the burst
    /// (including its propagation across rows) in the recording.
    pub onset_s: Option<f64>,
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            fwl_freq_hz: 0.2,
            fwl_amp_mv: 0.2,
            fwh_freq_hz: 0.6,
            fwh_amp_mv: 0.3,
            duration_s: 80.0,
            peak_amp_mv: 0.5,
            envelope_sigma_fraction: 1.0 / 6.0,
            propagation_speed_m_per_s: 0.04,
            onset_s: None,
        }
    }
}

/// When a tone is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Always,
    /// While the burst is present on any electrode row.
    Burst,
    /// Explicit `[start_s, end_s]`.
    Interval([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneParams {
    pub freq_hz: f64,
    pub amp_mv: f64,
    pub active: Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientToneParams {
    pub freq_hz: f64,
    /// Amplitude at the upper-left electrode.
    pub amp_max_mv: f64,
    /// Amplitude at the bottom-right electrode.
    pub amp_min_mv: f64,
}

impl Default for GradientToneParams {
    fn default() -> Self {
        Self { freq_hz: 0.3, amp_max_mv: 3.0, amp_min_mv: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub electrode_spacing_m: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub burst: BurstParams,
    pub slow_wave: ToneParams,
    pub respiration: GradientToneParams,
    pub cardiac: ToneParams,
    pub target_snr_db: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            electrode_spacing_m: 0.0175,
            sample_rate_hz: 10.0,
            duration_s: 600.0,
            burst: BurstParams::default(),
            slow_wave: ToneParams { freq_hz: 0.02, amp_mv: 7.0, active: Activity::Burst },
            respiration: GradientToneParams::default(),
            cardiac: ToneParams { freq_hz: 1.2, amp_mv: 0.03, active: Activity::Always },
            target_snr_db: 15.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Delay of the burst between adjacent electrode rows, in seconds.
    pub fn row_delay_s(&self) -> f64 {
        self.electrode_spacing_m / self.burst.propagation_speed_m_per_s
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    fn max_delay_s(&self) -> f64 {
        self.row_delay_s() * (self.rows.saturating_sub(1)) as f64
    }

    /// Burst onset on row 0, snapped to the sample grid.
    pub fn onset_s(&self) -> f64 {
        let fs = self.sample_rate_hz;
        let raw = self.burst.onset_s.unwrap_or((self.duration_s - self.burst.duration_s - self.max_delay_s()) / 2.0);
        (raw * fs).round() / fs
    }

    /// Interval during which the burst is present on at least one row.
    pub fn burst_window_s(&self) -> (f64, f64) {
        let on = self.onset_s();
        (on, on + self.burst.duration_s + self.max_delay_s())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let fs = self.sample_rate_hz;
        if self.rows == 0 || self.cols == 0 {
            return bad("grid must have at least one row and column".into());
        }
        if !(fs > 0.0 && fs.is_finite()) || !(self.duration_s > 0.0) {
            return bad("sample rate and duration must be positive".into());
        }
        let b = &self.burst;
        if !(b.duration_s > 0.0) || !(b.peak_amp_mv > 0.0) || !(b.envelope_sigma_fraction > 0.0) {
            return bad("burst duration, peak amplitude and envelope width must be positive".into());
        }
        if !(b.propagation_speed_m_per_s > 0.0) || !(self.electrode_spacing_m >= 0.0) {
            return bad("propagation speed must be positive and spacing non-negative".into());
        }
        for (name, f) in [
            ("fwl", b.fwl_freq_hz),
            ("fwh", b.fwh_freq_hz),
            ("slow wave", self.slow_wave.freq_hz),
            ("respiration", self.respiration.freq_hz),
            ("cardiac", self.cardiac.freq_hz),
        ] {
            if !(f >= 0.0 && f < fs / 2.0) {
                return bad(format!("{name} frequency {f} Hz must lie below Nyquist ({} Hz)", fs / 2.0));
            }
        }
        if [b.fwl_amp_mv, b.fwh_amp_mv, self.slow_wave.amp_mv, self.cardiac.amp_mv].iter().any(|a| *a < 0.0) {
            return bad("amplitudes must be non-negative".into());
        }
        let r = &self.respiration;
        if !(r.amp_max_mv >= r.amp_min_mv && r.amp_min_mv >= 0.0) {
            return bad("respiration amplitudes need amp_max >= amp_min >= 0".into());
        }
        if self.duration_s < b.duration_s + self.max_delay_s() {
            return bad("recording shorter than the burst plus its propagation delay".into());
        }
        let (start, end) = self.burst_window_s();
        if start < 0.0 || end > self.duration_s + 1e-9 {
            return bad(format!("burst window [{start}, {end}] s falls outside the recording"));
        }
        Ok(())
    }

    /// Contraction interval covering the burst and a dummy interval covering
    /// everything before it.
    pub fn annotations(&self) -> AnnotationSet {
        let (start, end) = self.burst_window_s();
        AnnotationSet {
            intervals: vec![
                Interval { kind: IntervalKind::Dummy, start_s: 0.0, end_s: start },
                Interval { kind: IntervalKind::Contraction, start_s: start, end_s: end },
            ],
        }
    }
}

/// Measurement tensor with its true components. `e_true` is stored as
/// `y - s_true - x_true`, so that difference chain cancels exactly.
#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub y: Tensor,
    pub s_true: Tensor,
    pub x_true: Tensor,
    pub e_true: Tensor,
    pub sample_rate_hz: f64,
}

fn envelope_fast_wave(p: &BurstParams, tau: f64) -> f64 {
    if !(0.0..p.duration_s).contains(&tau) {
        return 0.0;
    }
    let sigma = p.envelope_sigma_fraction * p.duration_s;
    let z = (tau - p.duration_s / 2.0) / sigma;
    let env = (-0.5 * z * z).exp();
    env * (p.fwl_amp_mv * (2.0 * PI * p.fwl_freq_hz * tau).sin()
        + p.fwh_amp_mv * (2.0 * PI * p.fwh_freq_hz * tau).sin())
}

fn burst_scale(p: &BurstParams, fs: f64) -> f64 {
    let n = (p.duration_s * fs).round() as usize;
    let max = (0..n).map(|k| envelope_fast_wave(p, k as f64 / fs)).fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        p.peak_amp_mv / max
    } else {
        0.0
    }
}

/// One burst sampled at `fs`, `round(duration_s * fs)` samples long, scaled
/// so its maximum equals `peak_amp_mv`.
pub fn burst_waveform(p: &BurstParams, fs: f64) -> Vec<f64> {
    let n = (p.duration_s * fs).round() as usize;
    let scale = burst_scale(p, fs);
    (0..n).map(|k| scale * envelope_fast_wave(p, k as f64 / fs)).collect()
}

fn tone_active(a: Activity, t: f64, window: (f64, f64)) -> bool {
    match a {
        Activity::Always => true,
        Activity::Burst => t >= window.0 && t <= window.1,
        Activity::Interval([s, e]) => t >= s && t <= e,
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<GroundTruthBundle> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let dims = [cfg.rows, cfg.cols, cfg.n_samples()];
    let onset_samples = (cfg.onset_s() * fs).round();
    let delay = cfg.row_delay_s();
    let scale = burst_scale(&cfg.burst, fs);
    let window = cfg.burst_window_s();
    let diag = ((cfg.rows - 1) + (cfg.cols - 1)).max(1) as f64;
    let resp = &cfg.respiration;

    let s_true = Tensor::from_fn(dims, |i, _j, k| {
        let tau = (k as f64 - onset_samples) / fs - i as f64 * delay;
        scale * envelope_fast_wave(&cfg.burst, tau)
    });
    let x_true = Tensor::from_fn(dims, |i, j, k| {
        let t = k as f64 / fs;
        let mut v = 0.0;
        if tone_active(cfg.slow_wave.active, t, window) {
            v += cfg.slow_wave.amp_mv * (2.0 * PI * cfg.slow_wave.freq_hz * t).sin();
        }
        let amp = resp.amp_max_mv - (resp.amp_max_mv - resp.amp_min_mv) * (i + j) as f64 / diag;
        v += amp * (2.0 * PI * resp.freq_hz * t).sin();
        if tone_active(cfg.cardiac.active, t, window) {
            v += cfg.cardiac.amp_mv * (2.0 * PI * cfg.cardiac.freq_hz * t).sin();
        }
        v
    });

    let clean = &s_true + &x_true;
    let p_signal = clean.sum_squares() / clean.len().max(1) as f64;
    let sigma = (p_signal / 10f64.powf(cfg.target_snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = (0..clean.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    let noise = Tensor::from_vec(dims, noise)?;
    let y = &clean + &noise;
    let e_true = &(&y - &s_true) - &x_true;
    Ok(GroundTruthBundle { y, s_true, x_true, e_true, sample_rate_hz: fs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_row_delay() {
        let c = SimConfig::default();
        assert!((c.row_delay_s() - 0.4375).abs() < 1e-15);
        assert_eq!(c.n_samples(), 6000);
    }

    #[test]
    fn waveform_peak_and_tails() {
        let p = BurstParams::default();
        let w = burst_waveform(&p, 10.0);
        assert_eq!(w.len(), 800);
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((max - 0.5).abs() < 1e-12);
        // envelope at the edges is exp(-4.5) of its peak
        let edge = (p.fwl_amp_mv + p.fwh_amp_mv) * burst_scale(&p, 10.0) * (-4.5f64).exp();
        assert!(edge <= 0.05 * 0.5);
        assert!(w[0].abs() <= 0.05 * 0.5 && w[799].abs() <= 0.05 * 0.5);
    }

    #[test]
    fn zero_amplitude_burst_is_silent() {
        let p = BurstParams { fwl_amp_mv: 0.0, fwh_amp_mv: 0.0, ..Default::default() };
        assert!(burst_waveform(&p, 10.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = SimConfig::default();
        c.cardiac.freq_hz = 6.0;
        assert!(matches!(simulate(&c), Err(Error::Config(_))));
        let c = SimConfig { duration_s: 50.0, ..Default::default() };
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn activity_parses_from_toml() {
        #[derive(Deserialize)]
        struct W {
            a: Activity,
            b: Activity,
        }
        let w: W = toml::from_str("a = \"burst\"\nb = { interval = [1.0, 2.0] }").unwrap();
        assert_eq!(w.a, Activity::Burst);
        assert_eq!(w.b, Activity::Interval([1.0, 2.0]));
    }
}
