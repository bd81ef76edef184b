use std::path::PathBuf;

use thiserror::Error;

use crate::sketch::Recovery;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e} below tolerance)")]
    NotPsd { min_eigenvalue: f64 },

    #[error("nothing to measure: largest eigenvalue is {0:e}")]
    NothingToMeasure(f64),

    /// The recovery solver hit its iteration cap. The best iterate found so far
    /// travels with the error together with its residuals.
    #[error(
        "solver did not converge after {} iterations (l1 excess {:e}, consensus residual {:e}, dual residual {:e})",
        .best.iterations, .best.l1_excess, .best.primal_residual, .best.dual_residual
    )]
    NotConverged { best: Box<Recovery> },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
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
}
