use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mkv_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// `2` for configuration and validation errors, `3` for numerical
    /// failures during a run.
    pub fn exit_code(&self) -> i32 {
        use mkv_core::Error as E;
        match self {
            CliError::Core(E::BlowUp { .. } | E::SingularDiffusion { .. } | E::NetTooLarge { .. }) => 3,
            _ => 2,
        }
    }
}
