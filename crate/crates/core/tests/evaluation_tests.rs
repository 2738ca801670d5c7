use std::f64::consts::PI;

use ehg_core::baselines::Method;
use ehg_core::evaluation::{
    compare_methods, pearson, scalogram, snr_db, tensor_correlation, AnnotationSet, CompareOptions, CorrelationMode,
    Interval, IntervalKind,
};
use ehg_core::simulator::{simulate, SimConfig};
use ehg_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(dims: [usize; 3], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_, _, _| rng.sample(StandardNormal))
}

fn two_intervals() -> AnnotationSet {
    AnnotationSet {
        intervals: vec![
            Interval { kind: IntervalKind::Contraction, start_s: 10.0, end_s: 30.0 },
            Interval { kind: IntervalKind::Dummy, start_s: 40.0, end_s: 60.0 },
        ],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snr_ignores_global_scale(seed in 0u64..1000, c in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
        let x = noise([2, 3, 700], seed);
        let a = snr_db(&x, 10.0, &two_intervals()).unwrap();
        let b = snr_db(&x.scale(c), 10.0, &two_intervals()).unwrap();
        prop_assert!((a.mean_db - b.mean_db).abs() <= 1e-12 * a.mean_db.abs().max(1.0));
        for (ra, rb) in a.per_electrode_db.iter().flatten().zip(b.per_electrode_db.iter().flatten()) {
            prop_assert!((ra - rb).abs() <= 1e-12 * ra.abs().max(1.0));
        }
        prop_assert!(a.ci95_db.0 <= a.mean_db && a.mean_db <= a.ci95_db.1);
    }

    #[test]
    fn correlation_ignores_positive_affine_maps(seed in 0u64..1000, a in 1e-3..1e3f64, b in -1e3..1e3f64) {
        let truth = noise([3, 2, 40], seed);
        let est = &truth.scale(0.7) + &noise([3, 2, 40], seed + 1);
        for mode in [CorrelationMode::Flattened, CorrelationMode::PerElectrodeMean] {
            let r0 = tensor_correlation(&est, &truth, mode).unwrap();
            let r1 = tensor_correlation(&est.map(|v| a * v + b), &truth, mode).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-9, "{} vs {}", r0, r1);
        }
    }

    #[test]
    fn scalogram_energy_is_quadratic_in_amplitude(c in 0.1..10.0f64, f in 0.1..2.0f64) {
        let x: Vec<f64> = (0..512).map(|k| (2.0 * PI * f * k as f64 / 10.0).sin() + 0.3 * (k as f64 * 0.01).cos()).collect();
        let energy = |s: &[f64]| -> f64 {
            scalogram(s, 10.0, 0.05, 4.0, 24).unwrap().magnitudes.iter().flatten().map(|v| v * v).sum()
        };
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (e0, e1) = (energy(&x), energy(&scaled));
        prop_assert!((e1 - c * c * e0).abs() <= 1e-10 * e1);
    }
}

#[test]
fn identical_and_shifted_estimates_correlate_perfectly() {
    let x = noise([4, 4, 200], 1);
    for mode in [CorrelationMode::Flattened, CorrelationMode::PerElectrodeMean] {
        assert!((tensor_correlation(&x, &x, mode).unwrap() - 1.0).abs() < 1e-12);
        assert!((tensor_correlation(&x.map(|v| v + 3.0), &x, mode).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn independent_tensors_are_uncorrelated() {
    let small = (0..100u64)
        .filter(|&s| {
            let r = tensor_correlation(
                &noise([4, 4, 1000], 2 * s),
                &noise([4, 4, 1000], 2 * s + 1),
                CorrelationMode::Flattened,
            );
            r.unwrap().abs() < 0.05
        })
        .count();
    assert!(small >= 95, "{small}");
}

#[test]
fn pearson_direct_formula() {
    let (a, b) = ([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 5.0]);
    let (ma, mb) = (2.5, 2.75);
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    assert!((pearson(&a, &b).unwrap() - sab / (saa * sbb).sqrt()).abs() < 1e-12);
}

#[test]
fn snr_power_ratios() {
    let ann = two_intervals();
    let equal = Tensor::from_fn([1, 2, 700], |_, _, k| if k % 2 == 0 { 1.0 } else { -1.0 });
    assert!(snr_db(&equal, 10.0, &ann).unwrap().mean_db.abs() < 1e-12);
    let tenfold = Tensor::from_fn([1, 2, 700], |_, _, k| if (100..300).contains(&k) { 10f64.sqrt() } else { 1.0 });
    assert!((snr_db(&tenfold, 10.0, &ann).unwrap().mean_db - 10.0).abs() < 1e-12);
    let empty = AnnotationSet::default();
    assert!(snr_db(&equal, 10.0, &empty).is_err());
}

#[test]
fn two_tone_scalogram_has_two_ridges() {
    let fs = 10.0;
    let x: Vec<f64> = (0..3000)
        .map(|k| {
            let t = k as f64 / fs;
            (2.0 * PI * 0.2 * t).sin() + (2.0 * PI * 1.2 * t).sin()
        })
        .collect();
    let sc = scalogram(&x, fs, 0.05, 4.0, 48).unwrap();
    let nearest = |f: f64| {
        (0..sc.freqs_hz.len())
            .min_by(|a, b| (sc.freqs_hz[*a] - f).abs().total_cmp(&(sc.freqs_hz[*b] - f).abs()))
            .unwrap()
    };
    let (lo, hi) = (nearest(0.2), nearest(1.2));
    for k in (600..2400).step_by(50) {
        let col: Vec<f64> = sc.magnitudes.iter().map(|row| row[k]).collect();
        let local_max = |q: usize| q > 0 && q + 1 < col.len() && col[q] >= col[q - 1] && col[q] >= col[q + 1];
        let ridges: Vec<usize> = (0..col.len()).filter(|&q| local_max(q)).collect();
        assert!(ridges.iter().any(|&q| q.abs_diff(lo) <= 1), "{ridges:?} vs {lo}");
        assert!(ridges.iter().any(|&q| q.abs_diff(hi) <= 1), "{ridges:?} vs {hi}");
    }
    // Frequencies are log-spaced.
    let r0 = sc.freqs_hz[1] / sc.freqs_hz[0];
    assert!(sc.freqs_hz.windows(2).all(|w| (w[1] / w[0] - r0).abs() < 1e-12));
}

#[test]
fn compare_rows_are_reproducible_and_empty_lists_allowed() {
    let cfg = SimConfig { duration_s: 300.0, ..SimConfig::default() };
    let truth = simulate(&cfg).unwrap();
    let ann = cfg.annotations();
    let opts = CompareOptions {
        methods: vec![Method::Pca, Method::Hosvd, Method::Bipolar],
        runs: 2,
        tune: false,
        ..CompareOptions::default()
    };
    let a = compare_methods(&truth.y, 10.0, Some(&truth), Some(&ann), &opts).unwrap();
    let b = compare_methods(&truth.y, 10.0, Some(&truth), Some(&ann), &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.correlations.len(), 3);
    assert_eq!(a.snr.len(), 4);
    assert!(a.correlations.iter().all(|r| r.error.is_none() && r.runs == 1));
    assert!(a.to_text().contains("hosvd"));

    let none = CompareOptions { methods: vec![], ..CompareOptions::default() };
    let r = compare_methods(&truth.y, 10.0, Some(&truth), Some(&ann), &none).unwrap();
    assert!(r.correlations.is_empty() && r.snr.is_empty());
    assert!(compare_methods(&truth.y, 10.0, None, None, &none).is_err());
}

#[test]
fn failing_method_is_recorded_in_its_row() {
    let y = noise([1, 2, 64], 5);
    let ann = AnnotationSet {
        intervals: vec![
            Interval { kind: IntervalKind::Contraction, start_s: 0.0, end_s: 3.0 },
            Interval { kind: IntervalKind::Dummy, start_s: 3.0, end_s: 6.0 },
        ],
    };
    // Bipolar needs two electrode rows.
    let opts = CompareOptions { methods: vec![Method::Bipolar, Method::Pca], tune: false, ..CompareOptions::default() };
    let r = compare_methods(&y, 10.0, None, Some(&ann), &opts).unwrap();
    assert!(r.snr.iter().find(|row| row.method == "bipolar").unwrap().error.is_some());
    assert!(r.snr.iter().find(|row| row.method == "pca").unwrap().report.is_some());
}
