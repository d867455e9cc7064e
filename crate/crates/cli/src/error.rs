use thiserror::Error;

/// Failures reported by the command line, each with its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Classifies an error raised while running a pipeline.
    pub fn from_pipeline(e: geomc_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if matches!(e.root(), geomc_core::Error::AllMissingStep { .. }) {
            CliError::Data(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
