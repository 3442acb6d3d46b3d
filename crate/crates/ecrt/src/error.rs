use std::path::Path;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ecrt_core::Error),
    #[error("{file}:{line}: individual row references unknown cluster `{cluster}`")]
    OrphanIndividual { file: String, line: u64, cluster: String },
    #[error("{file}:{line}: column `{column}`: cannot parse `{value}`")]
    UnparseableCell { file: String, line: u64, column: String, value: String },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::OrphanIndividual { .. } => "OrphanIndividual",
            CliError::UnparseableCell { .. } => "UnparseableCell",
            CliError::Schema { .. } => "Schema",
            CliError::Io { .. } => "Io",
            CliError::Config(_) => "Config",
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }
}
