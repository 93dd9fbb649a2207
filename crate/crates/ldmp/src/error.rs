//! Crate-wide error type and the exit-code mapping used by the CLI.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible tensor shapes or ranks.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter (pool target, reduced extent, repeat count, ...) is
    /// outside its valid range.
    #[error("range error: {0}")]
    Range(String),

    /// Invalid configuration value (even conv kernel, unknown kernel kind,
    /// inconsistent manifest, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Face indices out of range or otherwise broken mesh connectivity.
    #[error("topology error: {0}")]
    Topology(String),

    /// Geometrically degenerate input (e.g. collinear point set).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Ingested data violates a declared invariant (non-stochastic rows,
    /// non-finite values, size mismatch, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A verification check ran to completion and failed.
    #[error("check failed: {0}")]
    CheckFailed(String),

    /// One of the two LDMP lanes failed.
    #[error("{branch} branch failed: {source}")]
    Lane {
        branch: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 check failure, 2 usage/config,
    /// 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CheckFailed(_) => 1,
            Error::Io { .. } => 3,
            Error::Lane { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
