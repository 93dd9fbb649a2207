//! Forward-inference kernels for two-stage human mesh recovery with
//! low-dimensional mesh-pose interaction.
//!
//! The crate covers:
//!
//! - a minimal dense tensor substrate with an exact multiply-accumulate
//!   (MAC) counter ([`tensor`]);
//! - a single-level orthonormal Haar transform ([`wavelet`]) and the
//!   stage-1 frequency-domain feature extractor built on it ([`lifd`]);
//! - the four interaction kernels compared by the cost model: dense self-
//!   and cross-attention and their pooled low-dimensional counterparts LSP
//!   and LCP ([`attention`]);
//! - the stage-2 dual-branch mesh/pose engine with AdaLN conditioning,
//!   fork-join parallel execution and coarse-to-fine upsampling
//!   ([`engine`]);
//! - closed-form MAC/parameter formulas that match the instrumented counts
//!   exactly ([`cost`]);
//! - mesh/pose losses and evaluation metrics including Procrustes
//!   alignment ([`metrics`]);
//! - file formats, synthetic data and the benchmark harness behind the
//!   `ldmp-bench` binary ([`io`], [`synthetic`], [`mod@bench`]).
//!
//! See the crate `examples/` directory for one runnable example per major
//! capability.

pub mod attention;
pub mod bench;
pub mod cost;
pub mod engine;
pub mod error;
pub(crate) mod init;
pub mod io;
pub mod lifd;
pub mod metrics;
pub mod synthetic;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{CountingContext, Tensor};
