//! End-to-end runs shared by the CLI subcommands: preprocessing, a single
//! decomposition with its output files, and the full
//! source-to-report pipeline.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{run_method, BaselineOutput, Method};
use crate::error::{Error, Result};
use crate::evaluation::{compare_methods, dummy_energy_fraction, AnnotationSet, CompareOptions, CompareReport};
use crate::io::{self, DecomposeConfig, PreprocessConfig, RunConfig, RunManifest, Source};
use crate::signal::{bandpass, check_decimation, decimate, trim_head};
use crate::simulator::{simulate, GroundTruthBundle};
use crate::Tensor;

/// Trim, band-pass, decimate. Returns the tensor and its new sample rate.
pub fn preprocess(x: &Tensor, fs: f64, cfg: &PreprocessConfig) -> Result<(Tensor, f64)> {
    if cfg.decimate == 0 {
        return Err(Error::arg("decimation factor must be at least 1"));
    }
    let mut y = trim_head(x, fs, cfg.trim_seconds)?;
    if !cfg.skip_filter {
        y = bandpass(&y, fs, &cfg.filter)?;
        if !cfg.allow_aliasing && cfg.decimate > 1 {
            check_decimation(fs, cfg.decimate, cfg.filter.f_hi_hz)?;
        }
    }
    Ok((decimate(&y, cfg.decimate)?, fs / cfg.decimate as f64))
}

/// Localized, distributed and residual parts of one decomposition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub method: Method,
    pub output: BaselineOutput<f64>,
    /// `y - localized - distributed`. Empty for the bipolar montage, whose
    /// outputs live on a smaller grid.
    pub residual: Option<Tensor>,
}

pub fn decompose(y: &Tensor, cfg: &DecomposeConfig) -> Result<Decomposition> {
    let output = run_method(cfg.method, y, &cfg.params, cfg.params.vb.seed)?;
    let residual = (output.localized.dims() == y.dims()).then(|| &(y - &output.localized) - &output.distributed);
    Ok(Decomposition { method: cfg.method, output, residual })
}

/// Writes `s.ehgt`, `x.ehgt`, `e.ehgt` (when defined) and
/// `diagnostics.json` into `dir`. `extra` is merged into the diagnostics.
pub fn write_decomposition(dir: &Path, d: &Decomposition, fs: f64, extra: Value) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut put = |name: &str, t: &Tensor| -> Result<()> {
        let p = dir.join(name);
        io::write_tensor(&p, t, fs)?;
        files.push(p);
        Ok(())
    };
    put("s.ehgt", &d.output.localized)?;
    put("x.ehgt", &d.output.distributed)?;
    if let Some(e) = &d.residual {
        put("e.ehgt", e)?;
    }
    let mut diag = serde_json::Map::new();
    diag.insert("method".into(), json!(d.method));
    diag.extend(d.output.diagnostics.clone());
    if let Value::Object(m) = extra {
        diag.extend(m);
    }
    let p = dir.join("diagnostics.json");
    io::write_json(&p, &diag)?;
    files.push(p);
    Ok(files)
}

/// Writes `y`, `s_true`, `x_true`, `e_true` tensors, `simulation.json` and
/// `annotations.json`.
pub fn write_simulation(
    dir: &Path,
    b: &GroundTruthBundle,
    resolved: &impl Serialize,
    ann: &AnnotationSet,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (name, t) in
        [("y.ehgt", &b.y), ("s_true.ehgt", &b.s_true), ("x_true.ehgt", &b.x_true), ("e_true.ehgt", &b.e_true)]
    {
        let p = dir.join(name);
        io::write_tensor(&p, t, b.sample_rate_hz)?;
        files.push(p);
    }
    let p = dir.join("simulation.json");
    io::write_json(&p, resolved)?;
    files.push(p);
    let p = dir.join("annotations.json");
    io::write_annotations(&p, ann)?;
    files.push(p);
    Ok(files)
}

/// Checks that the residual closes the decomposition and that the localized
/// part carries relatively less energy in dummy intervals than the input.
#[derive(Debug, Clone, Serialize)]
pub struct SmokeCheck {
    pub reconstruction_max_abs: f64,
    pub dummy_fraction_input: f64,
    pub dummy_fraction_localized: f64,
}

pub fn smoke_check(y: &Tensor, d: &Decomposition, fs: f64, ann: &AnnotationSet) -> Result<SmokeCheck> {
    let e = d.residual.as_ref().ok_or_else(|| Error::arg("smoke check needs a full-grid decomposition"))?;
    let back = &(&d.output.localized + &d.output.distributed) + e;
    let reconstruction_max_abs = back.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(SmokeCheck {
        reconstruction_max_abs,
        dummy_fraction_input: dummy_energy_fraction(y, fs, ann)?,
        dummy_fraction_localized: dummy_energy_fraction(&d.output.localized, fs, ann)?,
    })
}

fn apply_to_truth(b: &GroundTruthBundle, cfg: &PreprocessConfig) -> Result<GroundTruthBundle> {
    let fs = b.sample_rate_hz;
    let (y, fs2) = preprocess(&b.y, fs, cfg)?;
    let (s_true, _) = preprocess(&b.s_true, fs, cfg)?;
    let (x_true, _) = preprocess(&b.x_true, fs, cfg)?;
    let e_true = &(&y - &s_true) - &x_true;
    Ok(GroundTruthBundle { y, s_true, x_true, e_true, sample_rate_hz: fs2 })
}

/// Shifts interval times after trimming the head of the recording, dropping
/// intervals that no longer fit.
fn shift_annotations(ann: &AnnotationSet, trim_s: f64) -> AnnotationSet {
    let mut out = ann.clone();
    out.intervals.retain_mut(|iv| {
        iv.start_s = (iv.start_s - trim_s).max(0.0);
        iv.end_s -= trim_s;
        iv.end_s > iv.start_s
    });
    out
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub manifest: RunManifest,
    pub report: Option<CompareReport>,
    pub smoke: Option<SmokeCheck>,
}

/// Source, optional preprocessing, decomposition, evaluation. Every output
/// goes under `cfg.pipeline.out`, with `manifest.json` last.
pub fn run_pipeline(cfg: &RunConfig, command: &str) -> Result<PipelineRun> {
    cfg.validate()?;
    let out = &cfg.pipeline.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest::new(command, cfg.clone());
    let mut files = Vec::new();

    let (mut y, mut fs, mut truth, mut ann) = match &cfg.pipeline.source {
        Source::Simulate => {
            let b = manifest.time("simulate", || simulate(&cfg.simulation))?;
            let ann = cfg.simulation.annotations();
            files.extend(write_simulation(out, &b, &cfg.simulation, &ann)?);
            (b.y.clone(), b.sample_rate_hz, Some(b), Some(ann))
        }
        Source::Tensor { path } => {
            manifest.add_input(path)?;
            let (y, fs) = io::read_tensor(path)?;
            (y, fs, None, None)
        }
        Source::Csv { path, layout } => {
            manifest.add_input(path)?;
            let y = manifest.time("ingest", || io::ingest_csv(path, layout))?;
            (y, layout.sample_rate_hz, None, None)
        }
    };
    if let Some(p) = &cfg.pipeline.annotations {
        manifest.add_input(p)?;
        ann = Some(io::read_annotations(p)?);
    }
    if cfg.pipeline.preprocess {
        let pre = &cfg.preprocess;
        let (py, pfs) = manifest.time("preprocess", || preprocess(&y, fs, pre))?;
        if let Some(b) = &truth {
            truth = Some(apply_to_truth(b, pre)?);
        }
        ann = ann.map(|a| shift_annotations(&a, (pre.trim_seconds * fs).round() / fs));
        y = py;
        fs = pfs;
        let p = out.join("preprocessed.ehgt");
        io::write_tensor(&p, &y, fs)?;
        files.push(p);
    }

    let d = manifest.time("decompose", || decompose(&y, &cfg.decompose))?;
    let smoke = match (&ann, &d.residual) {
        (Some(a), Some(_)) => smoke_check(&y, &d, fs, a).map_err(|e| log::warn!("smoke check skipped: {e}")).ok(),
        _ => None,
    };
    let extra = json!({ "smoke": smoke });
    files.extend(write_decomposition(out, &d, fs, extra)?);

    let report = if truth.is_some() || ann.is_some() {
        let opts = CompareOptions {
            methods: cfg.evaluate.methods.clone(),
            params: cfg.decompose.params.clone(),
            runs: cfg.evaluate.runs,
            tune: cfg.evaluate.tune,
            grid: cfg.evaluate.grid.clone(),
        };
        let report = manifest.time("evaluate", || compare_methods(&y, fs, truth.as_ref(), ann.as_ref(), &opts))?;
        let p = out.join("report.json");
        io::write_json(&p, &report)?;
        files.push(p);
        let p = out.join("report.txt");
        io::write_atomic(&p, report.to_text().as_bytes())?;
        files.push(p);
        Some(report)
    } else {
        None
    };

    for f in &files {
        manifest.add_output(f)?;
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(PipelineRun { manifest, report, smoke })
}
