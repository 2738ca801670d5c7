//! Comparison decomposers. Each returns a (localized, distributed) pair
//! under the conventions of the EHG literature: residual-as-localized for
//! the low-rank approximations, sparse part for the robust methods,
//! denoised signal for wavelet shrinkage and adjacent-row differences for
//! bipolar montages.

mod cp_als;
mod lowrank;
mod rpca;
mod tuning;
mod wavelet;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use cp_als::{cp_als, CpAlsFit};
pub use lowrank::{bipolar, hosvd, pca_lowrank};
pub use rpca::{rpca, soft_threshold};
pub use tuning::{tune, TuningGrid, TuningOutcome};
pub use wavelet::{wavelet_denoise, Daubechies4, ThresholdRule};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor3;
use crate::vb::{self, Priors, RunOptions};
use crate::Tensor;

/// Localized and distributed estimates plus free-form diagnostics.
#[derive(Debug, Clone)]
pub struct BaselineOutput<T: Real> {
    pub localized: Tensor3<T>,
    pub distributed: Tensor3<T>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl<T: Real> BaselineOutput<T> {
    /// Splits `y` into `y - distributed` and `distributed`.
    pub(crate) fn from_distributed(y: &Tensor3<T>, distributed: Tensor3<T>) -> Self {
        Self { localized: y - &distributed, distributed, diagnostics: BTreeMap::new() }
    }

    pub(crate) fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }
}

/// Every decomposition the CLI and the comparison harness know about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    VbTucker,
    BrtfCp,
    Rpca,
    Pca,
    Hosvd,
    CpAls,
    Bipolar,
    Wavelet,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::VbTucker,
        Method::BrtfCp,
        Method::Rpca,
        Method::Pca,
        Method::Hosvd,
        Method::CpAls,
        Method::Bipolar,
        Method::Wavelet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::VbTucker => "vb-tucker",
            Method::BrtfCp => "brtf-cp",
            Method::Rpca => "rpca",
            Method::Pca => "pca",
            Method::Hosvd => "hosvd",
            Method::CpAls => "cp-als",
            Method::Bipolar => "bipolar",
            Method::Wavelet => "wavelet",
        }
    }

    /// Whether the output depends on a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::VbTucker | Method::BrtfCp | Method::CpAls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::arg(format!("unknown method '{s}'")))
    }
}

/// Hyperparameters of every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub priors: Priors,
    pub vb: RunOptions,
    pub pca_k: usize,
    pub hosvd_ranks: [usize; 3],
    pub cp_rank: usize,
    pub cp_max_iters: usize,
    pub cp_tol: f64,
    /// `None` selects `1 / sqrt(max(mn, T))`.
    pub rpca_lambda: Option<f64>,
    pub rpca_tol: f64,
    pub rpca_max_iters: usize,
    pub wavelet_levels: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            priors: Priors::default(),
            vb: RunOptions::default(),
            pca_k: 2,
            hosvd_ranks: [2, 2, 3],
            cp_rank: 3,
            cp_max_iters: 500,
            cp_tol: 1e-9,
            rpca_lambda: None,
            rpca_tol: 1e-7,
            rpca_max_iters: 1000,
            wavelet_levels: 5,
        }
    }
}

/// Runs the CP-structured variational engine.
pub fn brtf_cp(y: &Tensor, opts: &RunOptions, priors: &Priors) -> Result<BaselineOutput<f64>> {
    let r = vb::cp::run(y, priors, opts)?;
    Ok(variational_output(r))
}

fn variational_output(r: vb::DecompositionResult) -> BaselineOutput<f64> {
    let diag = serde_json::to_value(&r).unwrap_or(Value::Null);
    let mut out = BaselineOutput { localized: r.s, distributed: r.x, diagnostics: BTreeMap::new() };
    if let Value::Object(map) = diag {
        out.diagnostics.extend(map);
    }
    out
}

/// Runs `method` on `y`. `seed` overrides the seed of stochastic methods.
pub fn run_method(method: Method, y: &Tensor, params: &MethodParams, seed: u64) -> Result<BaselineOutput<f64>> {
    let opts = RunOptions { seed, ..params.vb.clone() };
    match method {
        Method::VbTucker => Ok(variational_output(vb::run(y, &params.priors, &opts)?)),
        Method::BrtfCp => brtf_cp(y, &opts, &params.priors),
        Method::Rpca => {
            let [m, n, t] = y.dims();
            let lambda = params.rpca_lambda.unwrap_or(1.0 / ((m * n).max(t) as f64).sqrt());
            rpca(y, lambda, params.rpca_tol, params.rpca_max_iters)
        }
        Method::Pca => pca_lowrank(y, params.pca_k),
        Method::Hosvd => hosvd(y, params.hosvd_ranks),
        Method::CpAls => cp_als(y, params.cp_rank, params.cp_max_iters, params.cp_tol, seed).map(|f| f.output),
        Method::Bipolar => bipolar(y),
        Method::Wavelet => wavelet_denoise(y, params.wavelet_levels, ThresholdRule::UniversalSoft),
    }
}
