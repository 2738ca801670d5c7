//! Decomposition of multi-electrode electrohysterogram (EHG) tensors into a
//! sparse localized part, a low-rank Tucker distributed part and Gaussian
//! noise, together with a synthetic-data generator, baseline decomposers and
//! evaluation metrics.
//!
//! The tensor algebra, filters, metrics and deterministic baselines are
//! generic over [`Real`] (`f32` or `f64`). The variational engines, the
//! simulator and file I/O work in `f64`; the aliases below name the concrete
//! types they use.

// `!(x > 0.0)` is the NaN-rejecting form used throughout; index loops walk
// parallel per-mode arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod signal;
pub mod simulator;
pub mod tensor;
pub mod vb;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{cp_reconstruct, mttkrp, tucker_reconstruct, Matrix, Tensor3};

/// Double-precision tensor used throughout the inference code and file I/O.
pub type Tensor = Tensor3<f64>;
/// Double-precision matrix.
pub type Mat = Matrix<f64>;
