use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between loading artifacts and scoring a rule program.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0}: no data rows")]
    EmptyInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("program is not stratified: {0}")]
    Stratification(String),

    #[error("label collision: {0}")]
    Collision(String),

    #[error("kernel {0}: every feature-map region is empty")]
    EmptyRegion(u32),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid rule-set: {0}")]
    InvalidRuleSet(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 = usage/parameter error, 2 = data or format error, 3 = internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::InvalidParameter(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
