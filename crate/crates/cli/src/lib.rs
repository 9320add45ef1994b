//! Configuration, data ingestion and output writers behind the `imbibe` binary.

use std::path::Path;

pub mod config;
pub mod data;
pub mod output;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::{generate_synthetic, run_calibration, CalibrationRun};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error(transparent)]
    Solver(#[from] imbibition::solver::SolverError),
    #[error(transparent)]
    Calibration(#[from] imbibition::calibration::CalibrationError),
    #[error(transparent)]
    Sampler(#[from] imbibition::smc::SmcError),
    #[error(transparent)]
    Posterior(#[from] imbibition::posterior::PosteriorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
