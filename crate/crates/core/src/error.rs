use std::path::PathBuf;

use crate::embed::CapacityReport;

/// Errors produced by the simulator and its file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "embedding capacity infeasible: need {} slots, {} free (deficit {})",
        .0.needed, .0.free_slots, .0.deficit
    )]
    Capacity(CapacityReport),

    #[error("placement slot mismatch: {0}")]
    Slot(String),

    #[error("index ({row}, {col}) out of bounds for {rows}x{cols} array")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-finite loss at epoch {epoch}, step {step}: {value}")]
    NonFinite {
        epoch: usize,
        step: usize,
        value: f64,
    },

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
