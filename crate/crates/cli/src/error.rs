use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;
use wiener_coding::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for `{field}`: {reason}")]
    Usage { field: String, reason: String },

    #[error("{path} already exists; pass --force to overwrite")]
    Exists { path: PathBuf },

    #[error("cannot read config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn usage(field: &str, reason: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.to_owned(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Usage { .. } | CliError::Exists { .. } | CliError::Config { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::Domain(_)
                | CoreError::Model(_)
                | CoreError::Unsupported(_) => 2,
                CoreError::Infeasible(_) => 3,
                CoreError::SearchFailure(_)
                | CoreError::HorizonTooShort(_)
                | CoreError::SampleSize { .. } => 4,
            },
            CliError::Io { .. } | CliError::Output(_) => 4,
        };
        ExitCode::from(code)
    }
}
