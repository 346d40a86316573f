use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Model(#[from] fdaselect_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AppError>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use fdaselect_core::Error as E;
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => EXIT_USAGE,
            Self::Io { .. } | Self::Parse { .. } | Self::Csv(_) | Self::Json(_) => EXIT_DATA,
            Self::Model(e) => match e {
                E::Config(_) => EXIT_USAGE,
                E::Domain(_) | E::Degenerate(_) | E::Shape(_) => EXIT_DATA,
                E::Factorization(_) | E::Numeric(_) | E::NonMonotone { .. } => EXIT_NUMERIC,
            },
        }
    }
}
