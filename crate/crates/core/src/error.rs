use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no baseline: {0}")]
    NoBaseline(String),

    #[error("unlabeled region: epoch span [{start_s:.4}, {end_s:.4}) s is not covered by the label track")]
    UnlabeledRegion { start_s: f64, end_s: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("training set contains a single class ({0}); both real and fake epochs are required")]
    SingleClass(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("ICA did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("rank-deficient data: {0}")]
    RankDeficient(String),

    #[error("non-finite loss; first offending parameter block: {block}")]
    NonFiniteLoss { block: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for this error class: 2 input/config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Format { .. } | Error::Io { .. } => 2,
            Error::NoBaseline(_)
            | Error::UnlabeledRegion { .. }
            | Error::ShapeMismatch { .. }
            | Error::SingleClass(_)
            | Error::DegenerateSplit(_) => 3,
            Error::NonConvergence { .. } | Error::RankDeficient(_) | Error::NonFiniteLoss { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
