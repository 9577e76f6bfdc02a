use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys or incompatible settings. Exit code 1.
    #[error("usage: {0}")]
    Usage(String),

    /// A failure while computing or writing results. Exit code 2.
    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: robsub::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(context: impl Into<String>, source: robsub::Error) -> Self {
        CliError::Runtime {
            context: context.into(),
            source,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime { .. } | CliError::Io { .. } => 2,
        }
    }
}
