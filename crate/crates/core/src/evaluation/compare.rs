use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{mean_ci95, snr_db, tensor_correlation, AnnotationSet, CorrelationMode, SnrReport};
use crate::baselines::{run_method, tune, Method, MethodParams, TuningGrid};
use crate::error::{Error, Result};
use crate::simulator::GroundTruthBundle;
use crate::Tensor;

/// Ground truth matched to a method's localized output. The bipolar
/// montage differences row `i+1` against row `i`, so it is compared with
/// rows `1..m` of the true localized tensor.
pub fn localized_truth(method: Method, s_true: &Tensor) -> Tensor {
    if method == Method::Bipolar {
        let [m, n, t] = s_true.dims();
        Tensor::from_fn([m.saturating_sub(1), n, t], |i, j, k| s_true.get(i + 1, j, k))
    } else {
        s_true.clone()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareOptions {
    pub methods: Vec<Method>,
    pub params: MethodParams,
    /// Seeds `0..runs` for stochastic methods.
    pub runs: usize,
    /// Grid-search hyperparameters on the ground truth before scoring.
    pub tune: bool,
    pub grid: TuningGrid,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            params: MethodParams::default(),
            runs: 100,
            tune: true,
            grid: TuningGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationRow {
    pub method: Method,
    pub localized: f64,
    pub localized_per_electrode: f64,
    pub distributed: Option<f64>,
    pub distributed_per_electrode: Option<f64>,
    /// Standard deviation of the flattened localized correlation over runs.
    pub localized_sd: f64,
    pub runs: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnrRow {
    /// Method name, or `raw` for the measurements themselves.
    pub method: String,
    pub report: Option<SnrReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub correlations: Vec<CorrelationRow>,
    pub snr: Vec<SnrRow>,
    /// Hyperparameters each method was scored with.
    pub params: BTreeMap<Method, MethodParams>,
    pub runs: usize,
}

fn score_row(method: Method, truth: &GroundTruthBundle, params: &MethodParams, runs: usize) -> Result<CorrelationRow> {
    let seeds = if method.is_stochastic() { runs.max(1) } else { 1 };
    let target = localized_truth(method, &truth.s_true);
    let (mut loc, mut loc_pe, mut dist, mut dist_pe) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 0..seeds as u64 {
        let out = run_method(method, &truth.y, params, seed)?;
        loc.push(tensor_correlation(&out.localized, &target, CorrelationMode::Flattened)?);
        loc_pe.push(tensor_correlation(&out.localized, &target, CorrelationMode::PerElectrodeMean)?);
        if method != Method::Bipolar {
            dist.push(tensor_correlation(&out.distributed, &truth.x_true, CorrelationMode::Flattened)?);
            dist_pe.push(tensor_correlation(&out.distributed, &truth.x_true, CorrelationMode::PerElectrodeMean)?);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let m = mean(&loc);
    let sd = if loc.len() > 1 {
        (loc.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (loc.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CorrelationRow {
        method,
        localized: m,
        localized_per_electrode: mean(&loc_pe),
        distributed: (!dist.is_empty()).then(|| mean(&dist)),
        distributed_per_electrode: (!dist_pe.is_empty()).then(|| mean(&dist_pe)),
        localized_sd: sd,
        runs: seeds,
        error: None,
    })
}

/// Runs each method and scores it against the ground truth (correlation
/// table) and/or the annotations (SNR table). A failing method is recorded
/// in its row and the others still run.
pub fn compare_methods(
    y: &Tensor,
    fs: f64,
    truth: Option<&GroundTruthBundle>,
    ann: Option<&AnnotationSet>,
    opts: &CompareOptions,
) -> Result<CompareReport> {
    if truth.is_none() && ann.is_none() {
        return Err(Error::arg("comparison needs ground truth or annotations"));
    }
    let mut params = BTreeMap::new();
    for &method in &opts.methods {
        let p = match truth {
            Some(t) if opts.tune => match tune(method, t, &opts.params, &opts.grid) {
                Ok(o) => o.params,
                Err(e) => {
                    log::warn!("tuning {method} failed: {e}");
                    opts.params.clone()
                }
            },
            _ => opts.params.clone(),
        };
        params.insert(method, p);
    }
    let mut correlations = Vec::new();
    if let Some(t) = truth {
        for &method in &opts.methods {
            let row = score_row(method, t, &params[&method], opts.runs).unwrap_or_else(|e| CorrelationRow {
                method,
                localized: f64::NAN,
                localized_per_electrode: f64::NAN,
                distributed: None,
                distributed_per_electrode: None,
                localized_sd: f64::NAN,
                runs: 0,
                error: Some(e.to_string()),
            });
            correlations.push(row);
        }
    }
    let mut snr = Vec::new();
    if let Some(a) = ann {
        if !opts.methods.is_empty() {
            snr.push(match snr_db(y, fs, a) {
                Ok(r) => SnrRow { method: "raw".into(), report: Some(r), error: None },
                Err(e) => SnrRow { method: "raw".into(), report: None, error: Some(e.to_string()) },
            });
        }
        for &method in &opts.methods {
            let row = run_method(method, y, &params[&method], 0).and_then(|out| snr_db(&out.localized, fs, a));
            snr.push(match row {
                Ok(r) => SnrRow { method: method.name().into(), report: Some(r), error: None },
                Err(e) => SnrRow { method: method.name().into(), report: None, error: Some(e.to_string()) },
            });
        }
    }
    Ok(CompareReport { correlations, snr, params, runs: opts.runs })
}

/// Mean SNR across recordings with a t-interval over recording means.
pub fn aggregate_snr(reports: &[SnrReport]) -> (f64, (f64, f64)) {
    let means: Vec<f64> = reports.iter().map(|r| r.mean_db).collect();
    mean_ci95(&means)
}

impl CompareReport {
    /// Aligned plain-text rendering of both tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        if !self.correlations.is_empty() {
            let _ = writeln!(
                s,
                "{:<10} {:>10} {:>10} {:>10} {:>10} {:>5}",
                "method", "loc", "loc/elec", "dist", "dist/elec", "runs"
            );
            for r in &self.correlations {
                match &r.error {
                    Some(e) => {
                        let _ = writeln!(s, "{:<10} error: {e}", r.method.name());
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "{:<10} {:>10.4} {:>10.4} {:>10} {:>10} {:>5}",
                            r.method.name(),
                            r.localized,
                            r.localized_per_electrode,
                            fmt(r.distributed),
                            fmt(r.distributed_per_electrode),
                            r.runs
                        );
                    }
                }
            }
        }
        if !self.snr.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", "signal", "snr_db", "ci_lo", "ci_hi");
            for r in &self.snr {
                match (&r.report, &r.error) {
                    (Some(rep), _) => {
                        let _ = writeln!(
                            s,
                            "{:<10} {:>10.3} {:>10.3} {:>10.3}",
                            r.method, rep.mean_db, rep.ci95_db.0, rep.ci95_db.1
                        );
                    }
                    (None, e) => {
                        let _ = writeln!(s, "{:<10} error: {}", r.method, e.as_deref().unwrap_or("unknown"));
                    }
                }
            }
        }
        s
    }
}
