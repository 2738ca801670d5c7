use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CsvLayout;
use crate::baselines::{Method, MethodParams, TuningGrid};
use crate::error::{Error, Result};
use crate::signal::FilterSpec;
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub trim_seconds: f64,
    pub filter: FilterSpec,
    /// Skip the band-pass stage entirely.
    pub skip_filter: bool,
    pub decimate: usize,
    /// Decimate even when the pass band reaches the new Nyquist frequency.
    pub allow_aliasing: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            trim_seconds: 60.0,
            filter: FilterSpec::default(),
            skip_filter: false,
            decimate: 1,
            allow_aliasing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub method: Method,
    pub params: MethodParams,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { method: Method::VbTucker, params: MethodParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub methods: Vec<Method>,
    /// Seeds `0..runs` for stochastic methods.
    pub runs: usize,
    pub tune: bool,
    pub grid: TuningGrid,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { methods: Method::ALL.to_vec(), runs: 100, tune: true, grid: TuningGrid::default() }
    }
}

/// Where a pipeline gets its measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    /// Synthetic tensor from the `[simulation]` section, with ground truth
    /// and annotations.
    Simulate,
    /// Existing binary tensor file.
    Tensor { path: PathBuf },
    /// Exported CSV recording.
    Csv { path: PathBuf, layout: CsvLayout },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: Source,
    pub annotations: Option<PathBuf>,
    /// Run the `[preprocess]` stage before decomposing. Simulated data is
    /// already at its final rate and is normally left untouched.
    pub preprocess: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { source: Source::Simulate, annotations: None, preprocess: false, out: PathBuf::from("out") }
    }
}

/// Every tunable of every subcommand, one section each. Command-line flags
/// override values loaded from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimConfig,
    pub preprocess: PreprocessConfig,
    pub decompose: DecomposeConfig,
    pub evaluate: EvaluateConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_toml(&super::read_to_string(path)?, path)?;
        Ok(cfg.relative_to(path.parent().unwrap_or(Path::new(""))))
    }

    /// Resolves relative paths against `base`, the config file's directory.
    fn relative_to(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.pipeline.source {
            Source::Tensor { path } | Source::Csv { path, .. } => fix(path),
            Source::Simulate => {}
        }
        if let Some(a) = &mut self.pipeline.annotations {
            fix(a);
        }
        fix(&mut self.pipeline.out);
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        self.decompose.params.priors.validate()?;
        self.decompose.params.vb.validate()?;
        if self.preprocess.decimate == 0 {
            return Err(Error::Config("decimate factor must be at least 1".into()));
        }
        if let Source::Csv { layout, .. } = &self.pipeline.source {
            layout.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_default() {
        let text = r#"
            [simulation]
            seed = 7
            duration_s = 300.0

            [preprocess]
            trim_seconds = 0.0
            filter = { order = 2, f_lo_hz = 0.1, f_hi_hz = 3.0 }

            [decompose]
            method = "rpca"
            params = { rpca_lambda = 0.01 }

            [evaluate]
            methods = ["vb-tucker", "pca"]
            runs = 3

            [pipeline]
            source = { csv = { path = "rec.csv", layout = { grid = [2, 2], channel_order = [[0, 0], [0, 1], [1, 0], [1, 1]], sample_rate_hz = 20.0 } } }
            out = "results"
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("run.toml")).unwrap().relative_to(Path::new("/data"));
        assert_eq!(cfg.simulation.seed, 7);
        assert_eq!(cfg.simulation.rows, 4);
        assert_eq!(cfg.preprocess.filter.order, 2);
        assert!(cfg.preprocess.filter.bidirectional);
        assert_eq!(cfg.decompose.method, Method::Rpca);
        assert_eq!(cfg.decompose.params.rpca_lambda, Some(0.01));
        assert_eq!(cfg.evaluate.methods, vec![Method::VbTucker, Method::Pca]);
        assert_eq!(cfg.pipeline.out, PathBuf::from("/data/results"));
        match &cfg.pipeline.source {
            Source::Csv { path, layout } => {
                assert_eq!(path, &PathBuf::from("/data/rec.csv"));
                assert!(layout.header && layout.millivolts);
            }
            other => panic!("{other:?}"),
        }
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("[simulation]\nsede = 1\n", Path::new("x")), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[nope]\n", Path::new("x")).is_err());
    }
}
