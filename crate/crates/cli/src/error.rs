use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("selection failed: {0}")]
    Selection(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Selection(_) => 4,
        }
    }
}

impl From<interpfn_core::select::SelectError> for CliError {
    fn from(e: interpfn_core::select::SelectError) -> Self {
        CliError::Selection(e.to_string())
    }
}
