use std::path::PathBuf;

use crate::dataio::{CodecError, TableError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error(transparent)]
    Table(#[from] TableError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {value:e} below tolerance {tol:e}")]
    NotPositiveSemidefinite { value: f64, tol: f64 },

    #[error("statistic failed on bootstrap resample {rep} (seed {seed}): {source}")]
    Bootstrap {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("validation fold {fold} contains a single class; AUC is undefined")]
    SingleClassFold { fold: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Table(TableError::Io { .. }) => true,
            Error::Bootstrap { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
