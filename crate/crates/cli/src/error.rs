use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{pipeline} pipeline: {source}")]
    Pipeline {
        pipeline: &'static str,
        #[source]
        source: mspec_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: mspec_core::Error,
    },
}

/// Attaches the pipeline name to core errors.
pub(crate) trait Context<T> {
    fn ctx(self, pipeline: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for mspec_core::Result<T> {
    fn ctx(self, pipeline: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Pipeline { pipeline, source })
    }
}
