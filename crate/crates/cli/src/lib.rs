//! Batch driver for kgpath experiments: graph statistics, k-fold training,
//! evaluation, grid search and explanation export, all configured from one
//! TOML file.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use commands::{cmd_eval, cmd_generate, cmd_run, cmd_search, cmd_stats, cmd_train, EvalSource};
pub use config::{ModelKind, Overrides, RunConfig, Task};

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {1}", .0.display())]
    Io(PathBuf, std::io::Error),

    #[error(transparent)]
    Core(#[from] kgpath::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Writes `contents` to `path`, naming the file on failure.
pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_owned(), e))
}

pub(crate) fn create_dir(path: &std::path::Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(path.to_owned(), e))
}
