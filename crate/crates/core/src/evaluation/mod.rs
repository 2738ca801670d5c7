//! Scoring: correlation with ground truth, contraction-versus-dummy SNR and
//! Morlet scalograms.

mod compare;
mod scalogram;

pub use compare::{
    aggregate_snr, compare_methods, localized_truth, CompareOptions, CompareReport, CorrelationRow, SnrRow,
};
pub use scalogram::{scalogram, Scalogram, MORLET_OMEGA0};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Contraction,
    Dummy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub kind: IntervalKind,
    pub start_s: f64,
    pub end_s: f64,
}

/// Labelled contraction and dummy (non-contractile) intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub intervals: Vec<Interval>,
}

impl AnnotationSet {
    /// Checks `start < end` and that intervals of the same kind do not
    /// overlap.
    pub fn validate(&self) -> Result<()> {
        for (idx, iv) in self.intervals.iter().enumerate() {
            if !(iv.start_s.is_finite() && iv.end_s.is_finite() && iv.start_s < iv.end_s) {
                return Err(Error::arg(format!(
                    "interval #{idx} has start {} not before end {}",
                    iv.start_s, iv.end_s
                )));
            }
        }
        for (a, x) in self.intervals.iter().enumerate() {
            for (b, y) in self.intervals.iter().enumerate().skip(a + 1) {
                if x.kind == y.kind && x.start_s < y.end_s && y.start_s < x.end_s {
                    return Err(Error::arg(format!(
                        "{:?} intervals #{a} [{}, {}] and #{b} [{}, {}] overlap",
                        x.kind, x.start_s, x.end_s, y.start_s, y.end_s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, kind: IntervalKind) -> usize {
        self.intervals.iter().filter(|i| i.kind == kind).count()
    }

    /// Sample indices `[start, end)` of every interval of `kind`.
    pub fn sample_ranges(&self, kind: IntervalKind, fs: f64) -> Vec<(usize, usize)> {
        self.intervals
            .iter()
            .filter(|i| i.kind == kind)
            .map(|i| ((i.start_s * fs).round() as usize, (i.end_s * fs).round() as usize))
            .collect()
    }
}

/// Sample Pearson correlation.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::arg(format!("pearson needs equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    let n = T::from_count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::num("correlation undefined for a constant series"));
    }
    let r = sab / (num_traits::Float::sqrt(saa) * num_traits::Float::sqrt(sbb));
    Ok(num_traits::Float::max(-T::one(), num_traits::Float::min(T::one(), r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    /// One correlation over all entries.
    Flattened,
    /// Mean of the per-electrode time-series correlations.
    PerElectrodeMean,
}

pub fn tensor_correlation<T: Real>(est: &Tensor3<T>, truth: &Tensor3<T>, mode: CorrelationMode) -> Result<T> {
    if est.dims() != truth.dims() {
        return Err(Error::arg(format!("dims differ: {:?} vs {:?}", est.dims(), truth.dims())));
    }
    match mode {
        CorrelationMode::Flattened => pearson(est.data(), truth.data()),
        CorrelationMode::PerElectrodeMean => {
            let [m, n, _] = est.dims();
            let mut acc = T::zero();
            for j in 0..n {
                for i in 0..m {
                    acc += pearson(&est.series(i, j), &truth.series(i, j))?;
                }
            }
            Ok(acc / T::from_count(m * n))
        }
    }
}

/// SNR of one recording, contraction power over dummy power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    /// `m × n` per-electrode values in dB; `+inf` when a dummy interval is
    /// silent.
    pub per_electrode_db: Vec<Vec<f64>>,
    pub mean_db: f64,
    pub ci95_db: (f64, f64),
    /// Number of (contraction, dummy) intervals used.
    pub n_intervals: (usize, usize),
}

/// Mean and two-sided 95% Student-t interval. A single value yields a
/// degenerate interval.
pub fn mean_ci95(values: &[f64]) -> (f64, (f64, f64)) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, (f64::NAN, f64::NAN));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || !mean.is_finite() {
        return (mean, (mean, mean));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom").inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    (mean, (mean - half, mean + half))
}

pub fn snr_db<T: Real>(x: &Tensor3<T>, fs: f64, ann: &AnnotationSet) -> Result<SnrReport> {
    ann.validate()?;
    let nc = ann.count(IntervalKind::Contraction);
    let nd = ann.count(IntervalKind::Dummy);
    if nc == 0 || nd == 0 {
        return Err(Error::arg("SNR needs at least one contraction and one dummy interval"));
    }
    let [m, n, t] = x.dims();
    let duration = t as f64 / fs;
    if let Some(iv) = ann.intervals.iter().find(|i| i.start_s < 0.0 || i.end_s > duration + 0.5 / fs) {
        return Err(Error::arg(format!(
            "interval [{}, {}] s outside the {duration} s recording",
            iv.start_s, iv.end_s
        )));
    }
    let ranges_c = ann.sample_ranges(IntervalKind::Contraction, fs);
    let ranges_d = ann.sample_ranges(IntervalKind::Dummy, fs);
    let mean_square = |s: &[f64], ranges: &[(usize, usize)]| {
        let (mut acc, mut cnt) = (0.0, 0usize);
        for &(a, b) in ranges {
            for v in &s[a.min(t)..b.min(t)] {
                acc += v * v;
                cnt += 1;
            }
        }
        if cnt == 0 {
            f64::NAN
        } else {
            acc / cnt as f64
        }
    };
    let mut grid = vec![vec![0.0; n]; m];
    let mut flat = Vec::with_capacity(m * n);
    let mut warned = false;
    for (i, row) in grid.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let s: Vec<f64> = x.series(i, j).into_iter().map(Real::as_f64).collect();
            let pc = mean_square(&s, &ranges_c);
            let pd = mean_square(&s, &ranges_d);
            if pc.is_nan() || pd.is_nan() {
                return Err(Error::arg("an annotated interval contains no samples"));
            }
            let db = if pd == 0.0 {
                if !warned {
                    log::warn!("dummy intervals carry zero power; reporting infinite SNR");
                    warned = true;
                }
                f64::INFINITY
            } else {
                10.0 * (pc / pd).log10()
            };
            *cell = db;
            flat.push(db);
        }
    }
    let (mean_db, ci95_db) = mean_ci95(&flat);
    Ok(SnrReport { per_electrode_db: grid, mean_db, ci95_db, n_intervals: (nc, nd) })
}

/// Fraction of the signal energy (per unit time) that falls in dummy
/// intervals: dummy mean-square over the sum of dummy and contraction
/// mean-squares, pooled over electrodes.
pub fn dummy_energy_fraction<T: Real>(x: &Tensor3<T>, fs: f64, ann: &AnnotationSet) -> Result<f64> {
    ann.validate()?;
    let t = x.dims()[2];
    let slab = x.dims()[0] * x.dims()[1];
    let power = |kind| {
        let (mut acc, mut cnt) = (0.0, 0usize);
        for (a, b) in ann.sample_ranges(kind, fs) {
            for v in &x.data()[a.min(t) * slab..b.min(t) * slab] {
                acc += v.as_f64().powi(2);
                cnt += 1;
            }
        }
        (acc, cnt)
    };
    let (ed, cd) = power(IntervalKind::Dummy);
    let (ec, cc) = power(IntervalKind::Contraction);
    if cd == 0 || cc == 0 {
        return Err(Error::arg("energy fraction needs non-empty contraction and dummy intervals"));
    }
    let (pd, pc) = (ed / cd as f64, ec / cc as f64);
    if pd + pc == 0.0 {
        return Ok(0.0);
    }
    Ok(pd / (pd + pc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson::<f64>(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // [1,2,3,4] vs [1,2,3,5]: sxy = 6.5, sxx = 5, syy = 8.75
        let want = 6.5 / (5.0f64 * 8.75).sqrt();
        assert!((pearson(&x, &[1.0, 2.0, 3.0, 5.0]).unwrap() - want).abs() < 1e-12);
        assert!(matches!(pearson(&x, &[2.0; 4]), Err(Error::Numerical(_))));
        assert!(pearson(&x[..1], &x[..1]).is_err());
    }

    #[test]
    fn correlation_shift_invariant() {
        let t = Tensor3::from_fn([2, 2, 50], |i, j, k| ((i + 2 * j + 3 * k) as f64).sin());
        let shifted = t.map(|v| v + 4.0);
        for mode in [CorrelationMode::Flattened, CorrelationMode::PerElectrodeMean] {
            assert!((tensor_correlation(&t, &t, mode).unwrap() - 1.0).abs() < 1e-12);
            assert!((tensor_correlation(&shifted, &t, mode).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    fn ann(c: (f64, f64), d: (f64, f64)) -> AnnotationSet {
        AnnotationSet {
            intervals: vec![
                Interval { kind: IntervalKind::Contraction, start_s: c.0, end_s: c.1 },
                Interval { kind: IntervalKind::Dummy, start_s: d.0, end_s: d.1 },
            ],
        }
    }

    #[test]
    fn snr_identities() {
        let a = ann((0.0, 10.0), (10.0, 20.0));
        let flat = Tensor3::from_fn([2, 1, 200], |_, _, k| if k % 2 == 0 { 1.0 } else { -1.0 });
        let r = snr_db(&flat, 10.0, &a).unwrap();
        assert!(r.mean_db.abs() < 1e-12);
        let tenfold = Tensor3::from_fn([2, 1, 200], |_, _, k| if k < 100 { 10f64.sqrt() } else { 1.0 });
        let r = snr_db(&tenfold, 10.0, &a).unwrap();
        assert!((r.mean_db - 10.0).abs() < 1e-12);
        assert!(r.ci95_db.0 <= r.mean_db && r.mean_db <= r.ci95_db.1);
        assert_eq!(r.n_intervals, (1, 1));
    }

    #[test]
    fn snr_errors_and_sentinel() {
        let x = Tensor3::from_fn([1, 1, 100], |_, _, k| if k < 50 { 1.0 } else { 0.0 });
        let only_c = AnnotationSet { intervals: vec![ann((0.0, 1.0), (2.0, 3.0)).intervals[0].clone()] };
        assert!(snr_db(&x, 10.0, &only_c).is_err());
        assert!(snr_db(&x, 10.0, &ann((0.0, 5.0), (5.0, 20.0))).is_err());
        let r = snr_db(&x, 10.0, &ann((0.0, 5.0), (5.0, 10.0))).unwrap();
        assert!(r.mean_db.is_infinite());
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let mut a = ann((0.0, 10.0), (20.0, 30.0));
        a.intervals.push(Interval { kind: IntervalKind::Contraction, start_s: 5.0, end_s: 12.0 });
        let msg = a.validate().unwrap_err().to_string();
        assert!(msg.contains("#0") && msg.contains("#2"), "{msg}");
        let mut b = ann((0.0, 10.0), (20.0, 30.0));
        b.intervals[1].end_s = 19.0;
        b.intervals[1].start_s = 19.0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn t_interval_matches_table() {
        // t_{0.975, 4} = 2.776445
        let (m, (lo, hi)) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        let half = 2.776445105 * (2.5f64 / 5.0).sqrt();
        assert!((hi - m - half).abs() < 1e-6 && (m - lo - half).abs() < 1e-6);
    }
}
