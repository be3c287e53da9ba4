//! Harness around the `fixrank` library: the geometry verification battery,
//! desk-scale experiments, kernel timings, and MatrixMarket input/output.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod matrix_market;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    MatrixMarket(#[from] matrix_market::MmError),
    #[error(transparent)]
    Solver(#[from] fixrank::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for usage, input and I/O problems, 1 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            _ => 2,
        }
    }
}
