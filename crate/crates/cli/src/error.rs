use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Divergence(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ssgen::Error> for CliError {
    fn from(e: ssgen::Error) -> Self {
        use ssgen::Error as E;
        let msg = e.to_string();
        match e {
            E::Divergence { .. } | E::TrainingDivergence { .. } => CliError::Divergence(msg),
            E::Training(_) => CliError::Divergence(msg),
            E::Format(_) | E::Framing(_) | E::Consistency(_) => CliError::Data(msg),
            E::Checkpoint(_) => CliError::Checkpoint(msg),
            E::Dimension(_) | E::Parameter(_) => CliError::Config(msg),
            E::Io(_) => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
