//! `ehgdecomp`: simulate, preprocess, decompose and evaluate
//! electrohysterogram tensors.
//!
//! Exit codes: 0 success, 2 argument or configuration error, 3 file format
//! error, 4 numerical failure, 5 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ehg_core::baselines::Method;
use ehg_core::evaluation::{compare_methods, scalogram, CompareOptions};
use ehg_core::io::{self, RunConfig, RunManifest, Source};
use ehg_core::pipeline::{decompose, preprocess, run_pipeline, write_decomposition, write_simulation};
use ehg_core::simulator::{simulate, GroundTruthBundle};
use ehg_core::vb::Priors;
use ehg_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ehgdecomp", version, about = "Localized/distributed decomposition of multi-electrode EHG recordings")]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic recording with its ground-truth components.
    Simulate(SimulateArgs),
    /// Trim, band-pass and decimate a tensor file.
    Preprocess(PreprocessArgs),
    /// Split a tensor into localized, distributed and residual parts.
    Decompose(DecomposeArgs),
    /// Correlation and SNR tables for a set of methods.
    Evaluate(EvaluateArgs),
    /// Morlet scalogram of one electrode as CSV.
    Scalogram(ScalogramArgs),
    /// Run source, preprocessing, decomposition and evaluation from one
    /// config file or a previous run's manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        self.config.as_deref().map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    sample_rate_hz: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    trim_seconds: Option<f64>,
    #[arg(long)]
    low_hz: Option<f64>,
    #[arg(long)]
    high_hz: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    decimate: Option<usize>,
    /// Single forward pass instead of forward-backward.
    #[arg(long)]
    causal: bool,
    /// Skip the band-pass stage.
    #[arg(long)]
    no_filter: bool,
    /// Decimate even if the pass band reaches the new Nyquist frequency.
    #[arg(long)]
    allow_aliasing: bool,
}

/// Method hyperparameters shared by `decompose` and `evaluate`.
#[derive(Args, Debug)]
struct MethodArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Upper bound on the Tucker ranks, `R1,R2,R3`.
    #[arg(long, value_parser = parse_triple)]
    init_rank: Option<[usize; 3]>,
    #[arg(long)]
    prune_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML or JSON file with `a_tau`, `b_tau`, `a_gamma`, `b_gamma`,
    /// `a_lambda`, `b_lambda`.
    #[arg(long)]
    priors: Option<PathBuf>,
    /// Initial component count of brtf-cp.
    #[arg(long)]
    brtf_rank: Option<usize>,
    #[arg(long)]
    pca_k: Option<usize>,
    #[arg(long, value_parser = parse_triple)]
    hosvd_ranks: Option<[usize; 3]>,
    /// Rank of cp-als.
    #[arg(long)]
    cp_rank: Option<usize>,
    #[arg(long)]
    rpca_lambda: Option<f64>,
    #[arg(long)]
    wavelet_levels: Option<usize>,
}

impl MethodArgs {
    fn apply(&self, p: &mut ehg_core::baselines::MethodParams) -> Result<()> {
        let vb = &mut p.vb;
        set(&mut vb.max_iters, self.max_iters);
        set(&mut vb.tol, self.tol);
        if self.init_rank.is_some() {
            vb.init_rank = self.init_rank;
        }
        set(&mut vb.prune_threshold, self.prune_threshold);
        set(&mut vb.seed, self.seed);
        set(&mut vb.cp_rank, self.brtf_rank);
        if let Some(path) = &self.priors {
            p.priors = read_priors(path)?;
        }
        set(&mut p.pca_k, self.pca_k);
        set(&mut p.hosvd_ranks, self.hosvd_ranks);
        set(&mut p.cp_rank, self.cp_rank);
        if self.rpca_lambda.is_some() {
            p.rpca_lambda = self.rpca_lambda;
        }
        set(&mut p.wavelet_levels, self.wavelet_levels);
        Ok(())
    }
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `s.ehgt`, `x.ehgt`, `e.ehgt`, `diagnostics.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[command(flatten)]
    params: MethodArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Measurement tensor; defaults to `y.ehgt` inside `--truth`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory written by `simulate` holding the true components.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Seeds per stochastic method.
    #[arg(long)]
    runs: Option<usize>,
    /// Score with the given hyperparameters instead of grid-searching.
    #[arg(long)]
    no_tune: bool,
    /// Output directory for `report.json` and `report.txt`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: MethodArgs,
}

#[derive(Args, Debug)]
struct ScalogramArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Electrode `row,col`.
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    electrode: [usize; 2],
    #[arg(long, default_value_t = 0.05)]
    f_min: f64,
    #[arg(long, default_value_t = 4.0)]
    f_max: f64,
    #[arg(long, default_value_t = 64)]
    n_freqs: usize,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Re-run the configuration recorded in a previous `manifest.json`.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse_list(s: &str, n: usize) -> std::result::Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated integers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list(s, 3).map(|v| [v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    parse_list(s, 2).map(|v| [v[0], v[1]])
}

fn read_priors(path: &Path) -> Result<Priors> {
    let text = io::read_to_string(path)?;
    let priors: Priors = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml_priors(&text, path)?
    };
    priors.validate()?;
    Ok(priors)
}

fn toml_priors(text: &str, path: &Path) -> Result<Priors> {
    // Reuse the config parser: a bare priors table is the `params.priors`
    // section of `[decompose]`.
    let wrapped = format!("[decompose.params.priors]\n{text}");
    Ok(RunConfig::from_toml(&wrapped, path)?.decompose.params.priors)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn manifest_beside(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.manifest.json"))
}

fn finish(mut manifest: RunManifest, outputs: &[PathBuf], path: &Path) -> Result<()> {
    for f in outputs {
        manifest.add_output(f)?;
    }
    manifest.write(path)
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    let sim = &mut cfg.simulation;
    set(&mut sim.seed, a.seed);
    set(&mut sim.duration_s, a.duration_s);
    set(&mut sim.sample_rate_hz, a.sample_rate_hz);
    set(&mut sim.target_snr_db, a.snr_db);
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new("simulate", cfg.clone());
    let b = manifest.time("simulate", || simulate(&cfg.simulation))?;
    let files = write_simulation(&a.out, &b, &cfg.simulation, &cfg.simulation.annotations())?;
    finish(manifest, &files, &a.out.join("manifest.json"))
}

fn run_preprocess(a: PreprocessArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    let p = &mut cfg.preprocess;
    set(&mut p.trim_seconds, a.trim_seconds);
    set(&mut p.filter.f_lo_hz, a.low_hz);
    set(&mut p.filter.f_hi_hz, a.high_hz);
    set(&mut p.filter.order, a.order);
    set(&mut p.decimate, a.decimate);
    p.filter.bidirectional &= !a.causal;
    p.skip_filter |= a.no_filter;
    p.allow_aliasing |= a.allow_aliasing;
    let mut manifest = RunManifest::new("preprocess", cfg.clone());
    manifest.add_input(&a.input)?;
    let (x, fs) = io::read_tensor(&a.input)?;
    let (y, fs2) = manifest.time("preprocess", || preprocess(&x, fs, &cfg.preprocess))?;
    io::write_tensor(&a.output, &y, fs2)?;
    finish(manifest, std::slice::from_ref(&a.output), &manifest_beside(&a.output))
}

fn run_decompose(a: DecomposeArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    set(&mut cfg.decompose.method, a.method);
    a.params.apply(&mut cfg.decompose.params)?;
    cfg.decompose.params.priors.validate()?;
    cfg.decompose.params.vb.validate()?;
    let mut manifest = RunManifest::new("decompose", cfg.clone());
    manifest.add_input(&a.input)?;
    let (y, fs) = io::read_tensor(&a.input)?;
    create_dir(&a.out)?;
    let start = std::time::Instant::now();
    let d = manifest.time("decompose", || decompose(&y, &cfg.decompose))?;
    let extra = json!({ "wall_time_s": start.elapsed().as_secs_f64() });
    let files = write_decomposition(&a.out, &d, fs, extra)?;
    finish(manifest, &files, &a.out.join("manifest.json"))
}

fn read_truth(dir: &Path, y: ehg_core::Tensor, fs: f64) -> Result<GroundTruthBundle> {
    let load = |name: &str| -> Result<ehg_core::Tensor> {
        let (t, _) = io::read_tensor(&dir.join(name))?;
        if t.dims() != y.dims() {
            return Err(Error::Format {
                path: dir.join(name),
                msg: format!("dims {:?} differ from the measurements {:?}", t.dims(), y.dims()),
            });
        }
        Ok(t)
    };
    let s_true = load("s_true.ehgt")?;
    let x_true = load("x_true.ehgt")?;
    let e_true = load("e_true.ehgt")?;
    Ok(GroundTruthBundle { y, s_true, x_true, e_true, sample_rate_hz: fs })
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    let ev = &mut cfg.evaluate;
    if let Some(m) = a.methods {
        ev.methods = m;
    }
    set(&mut ev.runs, a.runs);
    ev.tune &= !a.no_tune;
    a.params.apply(&mut cfg.decompose.params)?;
    let input = match (&a.input, &a.truth) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("y.ehgt"),
        (None, None) => return Err(Error::Argument("evaluate needs --input or --truth".into())),
    };
    let mut manifest = RunManifest::new("evaluate", cfg.clone());
    manifest.add_input(&input)?;
    let (y, fs) = io::read_tensor(&input)?;
    let truth = match &a.truth {
        Some(dir) => Some(read_truth(dir, y.clone(), fs)?),
        None => None,
    };
    let ann = match &a.annotations {
        Some(p) => {
            manifest.add_input(p)?;
            Some(io::read_annotations(p)?)
        }
        None => None,
    };
    let opts = CompareOptions {
        methods: cfg.evaluate.methods.clone(),
        params: cfg.decompose.params.clone(),
        runs: cfg.evaluate.runs,
        tune: cfg.evaluate.tune,
        grid: cfg.evaluate.grid.clone(),
    };
    let report = manifest.time("evaluate", || compare_methods(&y, fs, truth.as_ref(), ann.as_ref(), &opts))?;
    create_dir(&a.out)?;
    let json_path = a.out.join("report.json");
    io::write_json(&json_path, &report)?;
    let text = report.to_text();
    let text_path = a.out.join("report.txt");
    io::write_atomic(&text_path, text.as_bytes())?;
    print!("{text}");
    finish(manifest, &[json_path, text_path], &a.out.join("manifest.json"))
}

fn run_scalogram(a: ScalogramArgs) -> Result<()> {
    let mut manifest = RunManifest::new("scalogram", RunConfig::default());
    manifest.add_input(&a.input)?;
    let (x, fs) = io::read_tensor(&a.input)?;
    let [m, n, _] = x.dims();
    let [i, j] = a.electrode;
    if i >= m || j >= n {
        return Err(Error::Argument(format!("electrode ({i}, {j}) outside the {m}x{n} grid")));
    }
    let sc = manifest.time("scalogram", || scalogram(&x.series(i, j), fs, a.f_min, a.f_max, a.n_freqs))?;
    io::write_scalogram_csv(&a.output, &sc, fs)?;
    finish(manifest, std::slice::from_ref(&a.output), &manifest_beside(&a.output))
}

fn run_pipeline_cmd(a: PipelineArgs) -> Result<()> {
    let mut cfg = match &a.manifest {
        Some(p) => RunManifest::read(p)?.config,
        None => a.config.load()?,
    };
    if let Some(out) = a.out {
        cfg.pipeline.out = out;
    }
    set(&mut cfg.evaluate.runs, a.runs);
    if let (Some(m), Source::Simulate) = (&a.manifest, &cfg.pipeline.source) {
        log::info!("re-running simulated pipeline recorded in {}", m.display());
    }
    let run = run_pipeline(&cfg, "pipeline")?;
    if let Some(r) = &run.report {
        print!("{}", r.to_text());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Decompose(a) => run_decompose(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Scalogram(a) => run_scalogram(a),
        Command::Pipeline(a) => run_pipeline_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
