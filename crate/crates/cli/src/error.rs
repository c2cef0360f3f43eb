use std::path::PathBuf;

use hamrom::error::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {}; run `hamrom {stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingArtifact { .. } => 2,
            Self::Numerical { .. } => 3,
            Self::Io { .. } => 1,
        }
    }

    /// Sorts a library error into a configuration or a numerical failure.
    pub fn from_core(context: impl Into<String>, source: Error) -> Self {
        let context = context.into();
        match source {
            Error::InvalidArgument(msg) | Error::Parse(msg) => Self::Config(format!("{context}: {msg}")),
            Error::Io(e) => Self::Io {
                path: PathBuf::from(context),
                source: e,
            },
            source => Self::Numerical { context, source },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let e = CliError::from_core("run", Error::NonFiniteState { step: 3 });
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("step 3"));
        assert_eq!(CliError::from_core("k", Error::InvalidArgument("bad".into())).exit_code(), 2);
        assert_eq!(CliError::from_core("k", Error::ZeroResidual { column: 4 }).exit_code(), 3);
    }
}
