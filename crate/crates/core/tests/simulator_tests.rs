use std::f64::consts::PI;

use ehg_core::simulator::{burst_waveform, simulate, Activity, BurstParams, SimConfig};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

#[test]
fn row_delay_from_spacing_and_speed() {
    let cfg = SimConfig::default();
    assert!((cfg.row_delay_s() - 0.4375).abs() < 1e-15);
    assert_eq!(cfg.n_samples(), 6000);
}

#[test]
fn bundle_is_additive_and_peaks_at_half_millivolt() {
    let b = simulate(&SimConfig::default()).unwrap();
    assert_eq!(b.y.dims(), [4, 4, 6000]);
    let rest = &(&(&b.y - &b.s_true) - &b.x_true) - &b.e_true;
    assert!(rest.data().iter().all(|v| *v == 0.0));
    let row0 = (0..4).flat_map(|j| b.s_true.series(0, j)).fold(0.0f64, f64::max);
    assert!((row0 - 0.5).abs() < 1e-12, "{row0}");
    // Later rows are delayed by a non-integer number of samples and sample
    // the burst between grid points; near a maximum that moves the value by
    // at most (2π f_fwh / fs)² / 8 of the peak.
    let within_sample = (2.0 * std::f64::consts::PI * 0.6 / 10.0).powi(2) / 8.0 * 0.5;
    let peak = b.s_true.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((peak - 0.5).abs() <= within_sample, "{peak}");
}

#[test]
fn noise_calibrated_to_target_snr() {
    for snr in [15.0, 5.0, 25.0] {
        let cfg = SimConfig { target_snr_db: snr, seed: 3, ..SimConfig::default() };
        let b = simulate(&cfg).unwrap();
        let clean = &b.s_true + &b.x_true;
        let measured = 10.0 * (clean.sum_squares() / b.e_true.sum_squares()).log10();
        assert!((measured - snr).abs() < 0.2, "{snr}: {measured}");
    }
    let short = SimConfig { duration_s: 300.0, ..SimConfig::default() };
    let b = simulate(&short).unwrap();
    let measured = 10.0 * ((&b.s_true + &b.x_true).sum_squares() / b.e_true.sum_squares()).log10();
    assert!((measured - 15.0).abs() < 0.2);
}

#[test]
fn respiration_gradient_along_diagonal() {
    let cfg = SimConfig {
        slow_wave: ehg_core::simulator::ToneParams { freq_hz: 0.02, amp_mv: 0.0, active: Activity::Always },
        cardiac: ehg_core::simulator::ToneParams { freq_hz: 1.2, amp_mv: 0.0, active: Activity::Always },
        ..SimConfig::default()
    };
    let b = simulate(&cfg).unwrap();
    let amp = |i, j| b.x_true.series(i, j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((amp(0, 0) - 3.0).abs() < 1e-3);
    assert!((amp(3, 3) - 1.5).abs() < 1e-3);
    assert!(amp(0, 0) > amp(1, 1) && amp(1, 1) > amp(2, 2) && amp(2, 2) > amp(3, 3));
}

#[test]
fn determinism_and_seed_dependence() {
    let a = simulate(&SimConfig::with_seed(11)).unwrap();
    let b = simulate(&SimConfig::with_seed(11)).unwrap();
    let c = simulate(&SimConfig::with_seed(12)).unwrap();
    assert_eq!(a.y.data(), b.y.data());
    assert_eq!(a.e_true.data(), b.e_true.data());
    assert_eq!(a.s_true.data(), c.s_true.data());
    assert_eq!(a.x_true.data(), c.x_true.data());
    assert_ne!(a.e_true.data(), c.e_true.data());
}

#[test]
fn burst_confined_to_its_window_and_delayed_per_row() {
    let cfg = SimConfig::default();
    let b = simulate(&cfg).unwrap();
    let (start, end) = cfg.burst_window_s();
    let fs = cfg.sample_rate_hz;
    for i in 0..4 {
        for j in 0..4 {
            for (k, v) in b.s_true.series(i, j).iter().enumerate() {
                let t = k as f64 / fs;
                if t < start || t > end {
                    assert_eq!(*v, 0.0, "({i},{j}) at {t}s");
                }
            }
        }
    }
    // Row r is row 0 delayed by r * 0.4375 s; compare on a fine grid.
    let fine = SimConfig { sample_rate_hz: 160.0, ..SimConfig::default() };
    let b = simulate(&fine).unwrap();
    let shift = (0.4375 * 160.0) as usize;
    let r0 = b.s_true.series(0, 0);
    let r2 = b.s_true.series(2, 1);
    for k in 0..r0.len() - 2 * shift {
        assert!((r2[k + 2 * shift] - r0[k]).abs() < 1e-12);
    }
}

#[test]
fn waveform_contract() {
    let p = BurstParams::default();
    let w = burst_waveform(&p, 10.0);
    assert_eq!(w.len(), 800);
    let peak = w.iter().fold(0.0f64, |m, v| m.max(*v));
    assert!((peak - 0.5).abs() < 1e-12);
    let tail = w[0].abs().max(w[w.len() - 1].abs());
    assert!(tail <= 0.05 * peak);
    // The unscaled shape matches the two-tone formula under the envelope.
    let sigma = 80.0 / 6.0;
    let raw = |t: f64| {
        (-0.5 * ((t - 40.0) / sigma).powi(2)).exp()
            * (0.2 * (2.0 * PI * 0.2 * t).sin() + 0.3 * (2.0 * PI * 0.6 * t).sin())
    };
    let ratio = w[123] / raw(12.3);
    for k in [200, 400, 555] {
        assert!((w[k] - ratio * raw(k as f64 / 10.0)).abs() < 1e-12);
    }
}

fn spectrum_peaks(x: &[f64], fs: f64, count: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let mag: Vec<f64> = buf[..x.len() / 2].iter().map(|c| c.norm()).collect();
    let mut peaks: Vec<usize> = (1..mag.len() - 1).filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]).collect();
    peaks.sort_by(|a, b| mag[*b].total_cmp(&mag[*a]));
    peaks.iter().take(count).map(|&k| k as f64 * fs / x.len() as f64).collect()
}

#[test]
fn distributed_spectrum_peaks_at_component_frequencies() {
    // With the slow wave gated to the burst window its rectangular-window
    // side lobes outrank the 0.03 mV cardiac line, so the check runs with
    // every tone switched on for the whole recording.
    let mut cfg = SimConfig::default();
    cfg.slow_wave.active = Activity::Always;
    let b = simulate(&cfg).unwrap();
    let bin = cfg.sample_rate_hz / cfg.n_samples() as f64;
    let mut peaks = spectrum_peaks(&b.x_true.series(2, 1), cfg.sample_rate_hz, 3);
    peaks.sort_by(f64::total_cmp);
    for (got, want) in peaks.iter().zip([0.02, 0.3, 1.2]) {
        assert!((got - want).abs() <= bin + 1e-12, "{peaks:?}");
    }
}

#[test]
fn default_spectrum_leads_with_respiration_and_slow_wave() {
    let cfg = SimConfig::default();
    let b = simulate(&cfg).unwrap();
    let bin = cfg.sample_rate_hz / cfg.n_samples() as f64;
    let peaks = spectrum_peaks(&b.x_true.series(0, 0), cfg.sample_rate_hz, 2);
    assert!((peaks[0] - 0.3).abs() <= bin && (peaks[1] - 0.02).abs() <= bin, "{peaks:?}");
}

#[test]
fn invalid_configs() {
    let too_short = SimConfig { duration_s: 50.0, ..SimConfig::default() };
    assert!(matches!(simulate(&too_short), Err(ehg_core::Error::Config(_))));
    let mut aliased = SimConfig::default();
    aliased.cardiac.freq_hz = 6.0;
    assert!(simulate(&aliased).is_err());
}
